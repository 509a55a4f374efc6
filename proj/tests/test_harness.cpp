#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qbsde/harness/presets.hpp"
#include "qbsde/harness/runner.hpp"

using namespace qbsde;
using namespace qbsde::harness;

namespace {

ScenarioConfig from_text(const std::string& text) { return config_from_json(json::parse(text)); }

// Two z-coupled quadratic components on a small lattice, theorem tag thm21.
ScenarioConfig small_system() {
    return from_text(R"json({
      "name": "small",
      "lattice": {"T": 1, "N": 8, "d": 1, "topology": "recombining"},
      "system": {"n": 2, "map": "z_coupled", "components": [
        {"f": "{theta1}*norm2(z1)", "h": "{vartheta1}*norm2(z2)", "terminal": {"type": "sign", "scale": 0.25}},
        {"f": "{theta2}*norm2(z2)", "h": "{vartheta2}*norm2(z1)", "terminal": {"type": "tanh", "scale": 0.25}}]},
      "coefficients": {"theta": 0.5, "vartheta": 0.1, "gamma": 0.5, "eta": 0.1},
      "run": {"theorem": "thm21", "mode": "theorem"}
    })json");
}

std::string status_stage(const RunOutcome& o) { return o.report["status"]["stage"].get<std::string>(); }

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("qbsde_harness_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::filesystem::remove_all(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST(ExitCodes, TableIsFixed) {
    EXPECT_EQ(int(ExitCode::ok), 0);
    EXPECT_EQ(int(ExitCode::usage), 2);
    EXPECT_EQ(int(ExitCode::config), 3);
    EXPECT_EQ(int(ExitCode::parse), 4);
    EXPECT_EQ(int(ExitCode::separation), 5);
    EXPECT_EQ(int(ExitCode::certificate), 6);
    EXPECT_EQ(int(ExitCode::lattice), 7);
    EXPECT_EQ(int(ExitCode::condition), 8);
    EXPECT_EQ(int(ExitCode::solver), 9);
    EXPECT_EQ(int(ExitCode::output), 10);
    EXPECT_STREQ(stage_name(ExitCode::separation), "separation");
    EXPECT_STREQ(stage_name(ExitCode::output), "output");
}

TEST(ExitCodes, Ok) {
    const auto o = run_scenario(small_system(), Verb::solve);
    EXPECT_EQ(o.code, ExitCode::ok);
    EXPECT_EQ(o.report["status"]["exit_code"], 0);
    EXPECT_TRUE(o.report["solve"]["converged"].get<bool>());
    EXPECT_EQ(o.csv.count("iterations.csv"), 1u);
    EXPECT_EQ(o.csv.count("profile.csv"), 1u);
}

TEST(ExitCodes, Usage) {
    EXPECT_THROW(parse_verb("frobnicate"), stage_failure);
    try {
        parse_verb("frobnicate");
    } catch (const stage_failure& e) {
        EXPECT_EQ(e.code(), ExitCode::usage);
    }
    const auto o = run_scenario(small_system(), Verb::scan, {"kappa", {1.0}, false});
    EXPECT_EQ(o.code, ExitCode::usage);
    EXPECT_TRUE(o.csv.empty());
}

TEST(ExitCodes, Config) {
    EXPECT_THROW(from_text(R"({"system": {"n": 1, "components": []}})"), config_error);
    EXPECT_THROW(from_text(R"({"system": {"n": 1, "components": [{}]}, "bogus": 1})"), config_error);
    EXPECT_THROW(from_text(R"({"system": {"n": 1, "components": [{}]}, "run": {"tol": -1}})"), config_error);
    EXPECT_THROW(from_text(R"({"system": {"n": 1, "components": [{"terminal": {"type": "cubic"}}]}})"), config_error);

    auto c = small_system();
    c.components[0].g = "y1";
    EXPECT_EQ(run_scenario(c, Verb::check).code, ExitCode::config);

    c = small_system();
    c.map = "full";  // thm21 expects the z-coupled map
    EXPECT_EQ(run_scenario(c, Verb::check).code, ExitCode::config);

    c = small_system();
    c.components[0].h = "{kappa}*norm2(z2)";
    const auto o = run_scenario(c, Verb::check);
    EXPECT_EQ(o.code, ExitCode::config);
    EXPECT_NE(o.report["status"]["message"].get<std::string>().find("kappa"), std::string::npos);
}

TEST(ExitCodes, ParseErrorStopsBeforeSolve) {
    auto c = small_system();
    c.components[1].f = "exp(";
    const auto o = run_scenario(c, Verb::solve);
    EXPECT_EQ(o.code, ExitCode::parse);
    EXPECT_EQ(status_stage(o), "parse");
    EXPECT_TRUE(o.report["solve"].is_null());
    EXPECT_TRUE(o.report["verdict"].is_null());
    EXPECT_TRUE(o.csv.empty());
    EXPECT_NE(o.report["status"]["message"].get<std::string>().find("f^2"), std::string::npos);
}

TEST(ExitCodes, Separation) {
    auto c = small_system();
    c.components[0].f = "norm2(z2)";
    const auto o = run_scenario(c, Verb::solve);
    EXPECT_EQ(o.code, ExitCode::separation);
    EXPECT_NE(o.report["status"]["message"].get<std::string>().find("z2"), std::string::npos);
}

TEST(ExitCodes, CertificateBlocksTheoremModeOnly) {
    auto c = small_system();
    c.coeffs.gamma = {0.25, 0.25};  // f carries 0.5 norm2
    auto o = run_scenario(c, Verb::solve);
    EXPECT_EQ(o.code, ExitCode::certificate);
    EXPECT_TRUE(o.report["solve"].is_null());
    EXPECT_FALSE(o.report["certificates"].empty());

    c.mode = "explore";
    o = run_scenario(c, Verb::solve);
    EXPECT_EQ(o.code, ExitCode::ok);
    EXPECT_TRUE(o.report["certificates"].empty());
}

TEST(ExitCodes, Lattice) {
    if (std::getenv("QBSDE_NODE_BUDGET")) GTEST_SKIP() << "budget overridden by the environment";
    auto c = small_system();
    c.topology = Topology::tree;
    c.N = 12;
    c.node_budget = 1000;
    EXPECT_EQ(run_scenario(c, Verb::check).code, ExitCode::lattice);
}

TEST(ExitCodes, Condition) {
    auto c = preset("thm31-certified");
    c.coeffs.beta = {0.5, 0.5};
    c.certify = false;
    const auto o = run_scenario(c, Verb::check);
    EXPECT_EQ(o.code, ExitCode::condition);
    EXPECT_EQ(status_stage(o), "condition");
}

TEST(ExitCodes, Solver) {
    // certification off, so the declared growth is only checked during the solve
    auto c = small_system();
    c.coeffs.gamma = {0.25, 0.25};
    c.certify = false;
    const auto o = run_scenario(c, Verb::solve);
    EXPECT_EQ(o.code, ExitCode::solver);
    EXPECT_NE(o.report["status"]["message"].get<std::string>().find("growth"), std::string::npos);
}

TEST(ExitCodes, Output) {
    TempDir tmp;
    std::filesystem::create_directories(tmp.path);
    const auto blocker = tmp.path / "file";
    std::ofstream(blocker) << "x";
    const auto c = small_system();
    const auto o = run_scenario(c, Verb::check);
    EXPECT_EQ(write_outputs(o, c, blocker / "sub"), ExitCode::output);
    EXPECT_EQ(write_outputs(o, c, tmp.path / "ok"), ExitCode::ok);
}

TEST(ExitCodes, NodeBudgetEnvironment) {
    const char* old = std::getenv("QBSDE_NODE_BUDGET");
    const std::string saved = old ? old : "";
    auto c = small_system();
    c.topology = Topology::tree;
    c.N = 12;
    ::setenv("QBSDE_NODE_BUDGET", "100", 1);
    EXPECT_EQ(run_scenario(c, Verb::check).code, ExitCode::lattice);
    ::setenv("QBSDE_NODE_BUDGET", "nonsense", 1);
    EXPECT_EQ(run_scenario(c, Verb::check).code, ExitCode::config);
    ::setenv("QBSDE_NODE_BUDGET", "1e9", 1);
    EXPECT_EQ(run_scenario(c, Verb::check).code, ExitCode::ok);
    if (old)
        ::setenv("QBSDE_NODE_BUDGET", saved.c_str(), 1);
    else
        ::unsetenv("QBSDE_NODE_BUDGET");
}

TEST(Presets, ShippedSet) {
    const std::vector<std::string> want{"ladder-tanh",       "system2-thm21",   "system2-thm22",  "system2-violating",
                                        "thm23-linear",      "thm31-certified", "thm32-certified"};
    EXPECT_EQ(preset_names(), want);
    EXPECT_THROW(preset("nope"), config_error);
    for (const auto& name : want) {
        const auto c = preset(name);
        EXPECT_EQ(c.name, name);
        // dump and reload is a fixed point
        const auto again = config_from_json(config_to_json(c));
        EXPECT_EQ(config_to_json(again).dump(), config_to_json(c).dump()) << name;
    }
}

TEST(Presets, System2Thm21) {
    const auto o = run_scenario(preset("system2-thm21"), Verb::probe);
    ASSERT_EQ(o.code, ExitCode::ok) << o.report["status"]["message"];
    EXPECT_EQ(o.report["verdict"]["status"], "satisfied");
    EXPECT_TRUE(o.report["solve"]["converged"].get<bool>());
    EXPECT_TRUE(o.report["solve"]["memberships_held"].get<bool>());
    EXPECT_TRUE(o.report["probe"]["passed"].get<bool>());
    EXPECT_TRUE(o.report["diagnostics"].empty());
    // symmetric data give symmetric values
    const auto y0 = o.report["solve"]["Y0"];
    EXPECT_NEAR(y0[0].get<double>(), y0[1].get<double>(), 1e-14);
    EXPECT_NEAR(y0[0].get<double>(), 0.003363275992956393, 1e-12);
}

TEST(Presets, ViolatingRecordsDiagnosticSolve) {
    const auto c = preset("system2-violating");
    // 16 |vartheta| ||xi|| = 16 * 1 * 0.25 = 4 > 1
    EXPECT_DOUBLE_EQ(16.0 * c.coeffs.vartheta[0] * c.components[0].terminal.scale, 4.0);
    const auto o = run_scenario(c, Verb::solve);
    EXPECT_EQ(o.code, ExitCode::ok);
    EXPECT_EQ(o.report["verdict"]["status"], "unsatisfied");
    EXPECT_TRUE(o.report["solve"].is_object());
    ASSERT_FALSE(o.report["diagnostics"].empty());
    EXPECT_NE(o.report["diagnostics"][0].get<std::string>().find("diagnostic"), std::string::npos);
}

TEST(Presets, CertifiedPresetsAreSatisfied) {
    for (const char* name : {"thm23-linear", "thm31-certified", "thm32-certified"}) {
        const auto o = run_scenario(preset(name), Verb::solve);
        ASSERT_EQ(o.code, ExitCode::ok) << name;
        EXPECT_EQ(o.report["verdict"]["status"], "satisfied") << name;
        EXPECT_TRUE(o.report["solve"]["converged"].get<bool>()) << name;
        for (const auto& cert : o.report["certificates"]) EXPECT_TRUE(cert["passed"].get<bool>()) << name;
    }
}

TEST(Presets, Thm23LinearAgainstExponential) {
    // g = y on [0,1] with xi = 1: Y_0 = e
    const auto o = run_scenario(preset("thm23-linear"), Verb::solve);
    const double y0 = o.report["solve"]["Y0"][0].get<double>();
    EXPECT_LT(std::abs(y0 - std::exp(1.0)) / std::exp(1.0), 0.01);
}

TEST(Ladder, TanhGapsShrink) {
    const auto o = run_scenario(preset("ladder-tanh"), Verb::ladder);
    ASSERT_EQ(o.code, ExitCode::ok);
    const auto& rows = o.report["ladder"]["rows"];
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_TRUE(o.report["ladder"]["gaps_non_increasing"].get<bool>());
    EXPECT_EQ(o.csv.at("ladder.csv").substr(0, 32), "N,scheme_value,oracle_value,gap\n");
}

TEST(Ladder, ConstantTerminalGivesZeroGaps) {
    auto c = preset("ladder-tanh");
    c.components[0].terminal = TerminalSpec{};
    c.components[0].terminal.value = 0.75;
    for (const auto& r : convergence_ladder(c, {8, 16, 32})) {
        EXPECT_EQ(r.gap, 0.0);
        EXPECT_EQ(r.scheme_value, 0.75);
    }
}

TEST(Ladder, SingleEntry) {
    auto c = preset("ladder-tanh");
    c.ladder = {8};
    const auto o = run_scenario(c, Verb::ladder);
    EXPECT_EQ(o.report["ladder"]["rows"].size(), 1u);
    EXPECT_TRUE(o.report["ladder"]["gaps_non_increasing"].is_null());
    EXPECT_TRUE(gaps_non_increasing(convergence_ladder(c, {8})));
}

TEST(Ladder, OracleInapplicable) {
    auto c = preset("ladder-tanh");
    c.components[0].f = "{gamma1}*norm2(z1) + t";
    EXPECT_THROW(convergence_ladder(c, {8}), oracle_inapplicable);
    EXPECT_EQ(run_scenario(c, Verb::ladder).code, ExitCode::config);
    EXPECT_THROW(convergence_ladder(preset("system2-thm21"), {8}), oracle_inapplicable);
    auto neg = preset("ladder-tanh");
    neg.coeffs.gamma = {-0.5, -0.5};
    EXPECT_THROW(convergence_ladder(neg, {8}), oracle_inapplicable);
}

TEST(Scan, Thm21FlipsAtDocumentedThreshold) {
    const auto base = preset("system2-thm21");
    const double xi = base.components[0].terminal.scale;
    const double threshold = 1.0 / (16.0 * xi);
    EXPECT_DOUBLE_EQ(threshold, 1.0);
    std::vector<double> grid;
    for (int k = 0; k < 17; ++k) grid.push_back(std::pow(10.0, -3.0 + 4.0 * k / 16.0));
    const auto rows = grid_scan(base, "vartheta", grid);
    ASSERT_EQ(rows.size(), 17u);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        EXPECT_EQ(rows[k].satisfied, rows[k].value <= threshold) << k;
        EXPECT_EQ(rows[k].status, rows[k].satisfied ? "satisfied" : "unsatisfied");
    }
    EXPECT_TRUE(rows[12].satisfied);
    EXPECT_FALSE(rows[13].satisfied);
}

TEST(Scan, OneValueOneRow) {
    const auto o = run_scenario(preset("system2-thm21"), Verb::scan, {"vartheta1", {0.5}, false});
    ASSERT_EQ(o.code, ExitCode::ok);
    EXPECT_EQ(o.report["scan"]["rows"].size(), 1u);
    const auto& csv = o.csv.at("scan.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "axis,value,status,satisfied,min_margin,converged,contraction");
}

TEST(Scan, BetaBoundaryRowsAreDomainErrors) {
    const auto rows = grid_scan(preset("thm31-certified"), "beta", {0.1, 0.5, 0.7});
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_NE(rows[0].status, "domain_error");
    EXPECT_EQ(rows[1].status, "domain_error");
    EXPECT_EQ(rows[2].status, "domain_error");
    EXPECT_FALSE(rows[1].message.empty());
}

TEST(Scan, InvalidAxis) {
    try {
        grid_scan(preset("system2-thm21"), "omega", {1.0});
        FAIL();
    } catch (const stage_failure& e) {
        EXPECT_EQ(e.code(), ExitCode::usage);
    }
    EXPECT_THROW(grid_scan(preset("system2-thm21"), "vartheta", {}), stage_failure);
    EXPECT_THROW(grid_scan(preset("ladder-tanh"), "gamma", {1.0}), stage_failure);
}

TEST(Scan, AxisNamesMoveDriversAndFields) {
    ScenarioConfig c = small_system();
    set_axis(c, "vartheta2", 0.3);
    EXPECT_EQ(c.coeffs.vartheta[0], 0.1);
    EXPECT_EQ(c.coeffs.vartheta[1], 0.3);
    set_axis(c, "theta", 0.7);
    EXPECT_EQ(c.coeffs.theta, (std::array<double, 2>{0.7, 0.7}));
    set_axis(c, "T", 2.0);
    EXPECT_EQ(c.T, 2.0);
    EXPECT_EQ(c.box.T, 2.0);
    EXPECT_EQ(substitute_coefficients("{vartheta2}*norm2(z1)", c), "(0.29999999999999999)*norm2(z1)");
}

TEST(Scan, WithSolveRecordsConvergence) {
    const auto rows = grid_scan(small_system(), "vartheta", {0.01, 0.1}, true);
    for (const auto& r : rows) {
        ASSERT_TRUE(r.converged.has_value());
        EXPECT_TRUE(*r.converged);
    }
}

TEST(Reproducibility, ByteIdenticalReports) {
    for (const char* name : {"system2-thm21", "thm31-certified"}) {
        const auto a = run_scenario(preset(name), Verb::probe);
        const auto b = run_scenario(preset(name), Verb::probe);
        EXPECT_EQ(a.report.dump(2), b.report.dump(2)) << name;
        EXPECT_EQ(a.csv, b.csv) << name;
    }
}

TEST(Reproducibility, FilesOnDisk) {
    TempDir tmp;
    const auto c = preset("system2-thm21");
    const auto o1 = run_scenario(c, Verb::probe);
    const auto o2 = run_scenario(c, Verb::probe);
    ASSERT_EQ(write_outputs(o1, c, tmp.path / "a"), ExitCode::ok);
    ASSERT_EQ(write_outputs(o2, c, tmp.path / "b"), ExitCode::ok);
    for (const char* f : {"report.json", "iterations.csv", "profile.csv"})
        EXPECT_EQ(slurp(tmp.path / "a" / f), slurp(tmp.path / "b" / f)) << f;
    const auto text = slurp(tmp.path / "a" / "report.json");
    EXPECT_EQ(text.find("time"), std::string::npos);
}

TEST(Reproducibility, SeedChangesProbeOnly) {
    auto c = preset("system2-thm21");
    const auto a = run_scenario(c, Verb::probe);
    c.seed = 99;
    const auto b = run_scenario(c, Verb::probe);
    EXPECT_EQ(a.report["solve"].dump(), b.report["solve"].dump());
    EXPECT_NE(a.report["probe"]["seed"], b.report["probe"]["seed"]);
}

TEST(Report, SchemaVersionAndLayout) {
    const auto o = run_scenario(small_system(), Verb::check);
    EXPECT_EQ(o.report["schema_version"], 1);
    EXPECT_EQ(o.report["verb"], "check");
    for (const char* key : {"scenario", "status", "config", "lattice", "terminal_norms", "certificates", "verdict",
                            "solve", "probe", "ladder", "scan", "diagnostics"})
        EXPECT_TRUE(o.report.contains(key)) << key;
    EXPECT_TRUE(o.report["solve"].is_null());
    EXPECT_EQ(o.report["lattice"]["terminal_nodes"], 9);
}

TEST(Report, CsvColumns) {
    const auto o = run_scenario(small_system(), Verb::solve);
    const auto& it = o.csv.at("iterations.csv");
    EXPECT_EQ(it.substr(0, it.find('\n')), "iteration,distance,y_distance,z_distance,contraction_factor");
    const auto& pr = o.csv.at("profile.csv");
    EXPECT_EQ(pr.substr(0, pr.find('\n')), "step,t,component,sup_abs_Y,bmo2_tail");
    // header plus (N+1) rows per component
    EXPECT_EQ(std::count(pr.begin(), pr.end(), '\n'), 1 + 2 * 9);
    EXPECT_EQ(csv_number(INFINITY), "inf");
    EXPECT_EQ(csv_number(NAN), "nan");
    EXPECT_EQ(num(NAN), json(nullptr));
}

TEST(Terminal, Catalog) {
    const Lattice lat(1.0, 4, 1, Topology::recombining);
    auto at = [&](TerminalSpec t) { return terminal_values(lat, t); };
    TerminalSpec t;
    t.value = 2.0;
    for (double v : at(t)) EXPECT_EQ(v, 2.0);

    t = {};
    t.type = "sign";
    t.scale = 0.5;
    const auto s = at(t);
    for (std::size_t v = 0; v < s.size(); ++v) {
        const double w = lat.walk(4, v, 0);
        EXPECT_EQ(s[v], w > 0 ? 0.5 : w < 0 ? -0.5 : 0.0);
    }

    t = {};
    t.type = "tanh";
    t.scale = 2.0;
    t.slope = 3.0;
    const auto th = at(t);
    for (std::size_t v = 0; v < th.size(); ++v) EXPECT_DOUBLE_EQ(th[v], 2.0 * std::tanh(3.0 * lat.walk(4, v, 0)));

    t = {};
    t.type = "clipped_linear";
    t.slope = 1.0;
    t.clip = 0.5;
    for (double v : at(t)) EXPECT_LE(std::abs(v), 0.5);

    t = {};
    t.type = "indicator";
    t.threshold = 0.0;
    t.scale = 3.0;
    const auto ind = at(t);
    for (std::size_t v = 0; v < ind.size(); ++v) EXPECT_EQ(ind[v], lat.walk(4, v, 0) > 0 ? 3.0 : 0.0);

    t = {};
    t.coord = 2;
    EXPECT_THROW(at(t), config_error);
    EXPECT_THROW(terminal_from_json(json{{"type", "tanh"}, {"clip", -1}}), config_error);
    EXPECT_THROW(terminal_from_json(json{{"type", "sign"}, {"unknown", 1}}), config_error);
}

TEST(Placeholders, Substitution) {
    ScenarioConfig c;
    c.coeffs.theta = {0.5, 0.25};
    c.coeffs.C = 2.0;
    EXPECT_EQ(substitute_coefficients("{theta1}*norm2(z1) + {C} - {theta2}", c),
              "(0.5)*norm2(z1) + (2) - (0.25)");
    EXPECT_EQ(substitute_coefficients("no placeholders", c), "no placeholders");
    EXPECT_THROW(substitute_coefficients("{theta3}", c), config_error);
    EXPECT_THROW(substitute_coefficients("{theta1", c), config_error);
    // negative values stay a single factor after substitution
    c.coeffs.vartheta = {-0.5, 0.0};
    const auto g = parse_generator(substitute_coefficients("2*{vartheta1}", c), {2, 1, false});
    std::vector<double> y{0, 0}, z{0, 0};
    EXPECT_EQ(g.eval(0.0, y, z), -1.0);
}
