#pragma once

// Scenario pipeline: parse -> separation -> lattice -> terminal -> certificate
// -> verdict -> solve -> membership/probe -> report. Every stage failure maps
// to its own exit code (see ExitCode) and is recorded in the report.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qbsde/conditions.hpp"
#include "qbsde/error.hpp"
#include "qbsde/generators.hpp"
#include "qbsde/harness/report.hpp"
#include "qbsde/harness/scenario.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/picard.hpp"
#include "qbsde/solver1d.hpp"

namespace qbsde::harness {

/// The ladder needs a decoupled pure-quadratic scenario.
class oracle_inapplicable : public error {
public:
    using error::error;
};

enum class Verb { check, solve, probe, ladder, scan };

inline const char* to_string(Verb v) {
    switch (v) {
        case Verb::check: return "check";
        case Verb::solve: return "solve";
        case Verb::probe: return "probe";
        case Verb::ladder: return "ladder";
        default: return "scan";
    }
}

inline Verb parse_verb(const std::string& s) {
    if (s == "check") return Verb::check;
    if (s == "solve") return Verb::solve;
    if (s == "probe") return Verb::probe;
    if (s == "ladder") return Verb::ladder;
    if (s == "scan") return Verb::scan;
    throw stage_failure(ExitCode::usage, "unknown verb '" + s + "'");
}

struct ScanRequest {
    std::string axis;
    std::vector<double> values;
    bool solve = false;
};

struct RunOutcome {
    ExitCode code = ExitCode::ok;
    json report;
    std::map<std::string, std::string> csv;  // file name -> contents
};

/// Parsed drivers, lattice, terminals and the assembled system.
struct CompiledScenario {
    ScenarioConfig config;
    Signature signature;
    std::vector<Generator> f, h, g;  // h[i] / g[i] empty when absent
    Lattice lattice;
    std::vector<std::vector<double>> terminals;
    std::vector<double> xi_norms;
    SystemSpec spec;
};

namespace detail {

inline std::string component_label(int i, const char* which) {
    return std::string(which) + "^" + std::to_string(i + 1);
}

inline Generator parse_driver(const std::string& text, const ScenarioConfig& c, const Signature& sig, int i,
                              const char* which) {
    std::string expanded;
    try {
        expanded = substitute_coefficients(text, c);
    } catch (const config_error& e) {
        throw stage_failure(ExitCode::config, component_label(i, which) + ": " + e.what());
    }
    try {
        return parse_generator(expanded, sig);
    } catch (const parse_error& e) {
        throw stage_failure(ExitCode::parse, component_label(i, which) + " '" + expanded + "': " + e.what());
    }
}

inline std::vector<double> block_buffer(const Signature& s) { return std::vector<double>(std::size_t(s.n) * s.d); }

inline void require_theorem_shape(const ScenarioConfig& c) {
    if (c.theorem == "none") return;
    const std::map<std::string, std::string> maps{
        {"thm21", "z_coupled"}, {"thm22", "z_coupled"}, {"thm23", "y_coupled"}, {"thm31", "full"}, {"thm32", "full"}};
    const auto& want = maps.at(c.theorem);
    if (c.map != want)
        throw stage_failure(ExitCode::config, c.theorem + " needs system.map '" + want + "', got '" + c.map + "'");
    if (c.theorem != "thm23" && c.n != 2) throw stage_failure(ExitCode::config, c.theorem + " needs n = 2");
}

}  // namespace detail

/// Parse (exit 4), separation (exit 5), lattice (exit 7) and terminal
/// evaluation. Configuration inconsistencies raise exit 3.
inline CompiledScenario compile(const ScenarioConfig& config) {
    CompiledScenario cs;
    cs.config = config;
    const ScenarioConfig& c = cs.config;
    if (c.mode == "theorem") detail::require_theorem_shape(c);
    cs.signature = Signature{c.n, c.d, c.coordinate_access};
    const bool joint = c.map == "y_coupled";

    for (int i = 0; i < c.n; ++i) {
        const auto& b = c.components[i];
        if (joint) {
            if (b.g.empty()) throw stage_failure(ExitCode::config, "y_coupled map needs a joint driver g per component");
            if (!b.f.empty() || !b.h.empty())
                throw stage_failure(ExitCode::config, "y_coupled map takes g only, not f/h");
            cs.f.emplace_back();
            cs.h.emplace_back();
            cs.g.push_back(detail::parse_driver(b.g, c, cs.signature, i, "g"));
        } else {
            if (!b.g.empty()) throw stage_failure(ExitCode::config, "separated maps take f and h, not g");
            cs.f.push_back(detail::parse_driver(b.f.empty() ? "0" : b.f, c, cs.signature, i, "f"));
            cs.h.push_back(b.h.empty() ? Generator() : detail::parse_driver(b.h, c, cs.signature, i, "h"));
            cs.g.emplace_back();
        }
    }

    for (int i = 0; i < c.n; ++i) {
        const auto v = joint ? validate_h5(cs.g[i], i + 1)
                             : validate_separation(cs.f[i], cs.h[i] ? &cs.h[i] : nullptr, i + 1);
        if (!v.passed) {
            std::string names;
            for (const auto& o : v.offending) names += (names.empty() ? "" : ", ") + o;
            throw stage_failure(ExitCode::separation, detail::component_label(i, joint ? "g" : "f") +
                                                          " references " + names);
        }
    }

    try {
        cs.lattice = Lattice(c.T, c.N, c.d, c.topology, effective_node_budget(c));
    } catch (const config_error& e) {
        throw stage_failure(ExitCode::config, e.what());
    } catch (const error& e) {
        throw stage_failure(ExitCode::lattice, e.what());
    }

    for (int i = 0; i < c.n; ++i) {
        try {
            cs.terminals.push_back(terminal_values(cs.lattice, c.components[i].terminal));
        } catch (const error& e) {
            throw stage_failure(ExitCode::config, detail::component_label(i, "xi") + ": " + e.what());
        }
        double m = 0.0;
        for (double x : cs.terminals.back()) m = std::max(m, std::abs(x));
        cs.xi_norms.push_back(m);
    }

    cs.spec.lattice = cs.lattice;
    const int n = c.n;
    const int d = c.d;
    for (int i = 0; i < n; ++i) {
        SystemComponent comp;
        comp.terminal = cs.terminals[i];
        if (!joint) {
            comp.f = [gen = cs.f[i], y = std::vector<double>(std::size_t(n)), z = detail::block_buffer(cs.signature),
                      i, d](const NodeContext& ctx, std::span<const double> zi) mutable {
                std::copy(zi.begin(), zi.end(), z.begin() + std::ptrdiff_t(i) * d);
                return gen.eval(ctx.t, y, z);
            };
            if (cs.h[i])
                comp.h = [gen = cs.h[i]](const NodeContext& ctx, std::span<const double> y,
                                         std::span<const double> z) { return gen.eval(ctx.t, y, z); };
            if (c.mode == "theorem") {
                comp.check_growth = true;
                comp.C = c.coeffs.C;
                comp.gamma = c.coeffs.gamma[std::min(i, 1)];
            }
        } else {
            comp.g = [gen = cs.g[i], z = detail::block_buffer(cs.signature), i, d](
                         const NodeContext& ctx, std::span<const double> y, std::span<const double> zi) mutable {
                std::copy(zi.begin(), zi.end(), z.begin() + std::ptrdiff_t(i) * d);
                return gen.eval(ctx.t, y, z);
            };
        }
        cs.spec.components.push_back(std::move(comp));
    }
    return cs;
}

/// Verdict of the selected theorem for the configured coefficients.
inline ConditionVerdict evaluate_verdict(const ScenarioConfig& c, const std::vector<double>& xi_norms) {
    const auto& k = c.coeffs;
    const double x1 = xi_norms.empty() ? 0.0 : xi_norms[0];
    const double x2 = xi_norms.size() > 1 ? xi_norms[1] : x1;
    if (c.theorem == "thm21") return check_thm21(k.vartheta[0], k.vartheta[1], x1, x2);
    if (c.theorem == "thm22")
        return check_thm22(k.theta[0], k.theta[1], k.vartheta[0], k.vartheta[1], x1, x2, k.safety,
                           k.unsquared_variant);
    if (c.theorem == "thm23") return check_thm23(k.C, k.beta[0], k.theta[0], xi_norms, c.T, c.n);
    CoeffSet s = k;
    s.T = c.T;
    s.xi_norm = {x1, x2};
    if (c.theorem == "thm31") return check_thm31(s);
    if (c.theorem == "thm32") return check_thm32(s);
    throw stage_failure(ExitCode::config, "no theorem selected");
}

inline std::vector<CoefficientCertificate> certify(const CompiledScenario& cs) {
    const auto& c = cs.config;
    std::vector<CoefficientCertificate> out;
    SamplingBox box = c.box;
    box.T = c.T;
    for (int i = 0; i < c.n; ++i) {
        if (c.map == "y_coupled")
            out.push_back(certify_h5(cs.g[i], i + 1, c.coeffs.C, c.coeffs.beta[0], c.coeffs.theta[0], box, c.grid));
        else
            out.push_back(
                certify_coefficients(cs.f[i], cs.h[i] ? &cs.h[i] : nullptr, c.coeffs, i + 1, box, c.grid));
    }
    return out;
}

inline PicardOptions picard_options(const ScenarioConfig& c, const ConditionVerdict* v) {
    PicardOptions o;
    o.tol = c.tol;
    o.max_iter = c.max_iter;
    o.scheme = c.scheme;
    if (v && v->satisfied) o.bounds = v->bounds;
    return o;
}

inline YCoupledOptions y_options(const ScenarioConfig& c) {
    YCoupledOptions o;
    o.tol = c.tol;
    o.max_iter = c.max_iter;
    o.beta = c.coeffs.beta[0];
    o.C = c.coeffs.C;
    return o;
}

inline SolveReport solve(const CompiledScenario& cs, const ConditionVerdict* v) {
    const auto& c = cs.config;
    if (c.map == "y_coupled") return picard_y_coupled(cs.spec, y_options(c));
    const auto o = picard_options(c, v);
    return c.map == "z_coupled" ? picard_z_coupled(cs.spec, o) : picard_full(cs.spec, o);
}

inline ProbeVerdict probe(const CompiledScenario& cs, const ConditionVerdict* v, int restarts) {
    const auto& c = cs.config;
    const ProbeMap m = c.map == "z_coupled" ? ProbeMap::z_coupled
                       : c.map == "full"    ? ProbeMap::full
                                            : ProbeMap::y_coupled;
    return uniqueness_probe(cs.spec, m, picard_options(c, v), restarts, c.seed, y_options(c));
}

struct LadderRow {
    int N = 0;
    double scheme_value = 0.0;
    double oracle_value = 0.0;
    double gap = 0.0;
};

/// gamma of a decoupled pure-quadratic scenario, or oracle_inapplicable.
inline double ladder_gamma(const ScenarioConfig& c) {
    if (c.n != 1 || c.map == "y_coupled")
        throw oracle_inapplicable("convergence ladder needs n = 1 with a separated driver");
    const auto& b = c.components[0];
    if (!b.h.empty()) throw oracle_inapplicable("convergence ladder needs h = 0");
    const Signature sig{1, c.d, c.coordinate_access};
    const auto f = detail::parse_driver(b.f.empty() ? "0" : b.f, c, sig, 0, "f");
    const auto gamma = match_pure_quadratic(f, 1);
    if (!gamma || !(*gamma > 0.0))
        throw oracle_inapplicable("convergence ladder needs f = gamma*norm2(z1) with gamma > 0, got '" + b.f + "'");
    return *gamma;
}

/// Y_0 of the scheme against the exponential-transform oracle for each N.
inline std::vector<LadderRow> convergence_ladder(const ScenarioConfig& c, const std::vector<int>& Ns) {
    if (Ns.empty()) throw config_error("convergence ladder needs at least one N");
    const double gamma = ladder_gamma(c);
    std::vector<LadderRow> rows;
    for (int N : Ns) {
        Lattice lat;
        try {
            lat = Lattice(c.T, N, c.d, c.topology, effective_node_budget(c));
        } catch (const config_error&) {
            throw;
        } catch (const error& e) {
            throw stage_failure(ExitCode::lattice, e.what());
        }
        const auto xi = terminal_values(lat, c.components[0].terminal);
        const auto sol = solve_backward(lat, xi, pure_quadratic(gamma), c.scheme);
        const auto oracle = cole_hopf_oracle(lat, gamma, xi);
        LadderRow r;
        r.N = N;
        r.scheme_value = sol.Y(0, 0);
        r.oracle_value = oracle(0, 0);
        r.gap = std::abs(r.scheme_value - r.oracle_value);
        rows.push_back(r);
    }
    return rows;
}

/// True when the gaps never increase (vacuous for a single row).
inline bool gaps_non_increasing(const std::vector<LadderRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].gap > rows[i - 1].gap) return false;
    return true;
}

inline std::string ladder_csv(const std::vector<LadderRow>& rows) {
    std::string out = "N,scheme_value,oracle_value,gap\n";
    for (const auto& r : rows)
        out += std::to_string(r.N) + "," + csv_number(r.scheme_value) + "," + csv_number(r.oracle_value) + "," +
               csv_number(r.gap) + "\n";
    return out;
}

inline json to_json(const std::vector<LadderRow>& rows) {
    json a = json::array();
    for (const auto& r : rows)
        a.push_back({{"N", r.N}, {"scheme_value", num(r.scheme_value)}, {"oracle_value", num(r.oracle_value)},
                     {"gap", num(r.gap)}});
    return {{"rows", a},
            {"gaps_non_increasing", rows.size() > 1 ? json(gaps_non_increasing(rows)) : json(nullptr)}};
}

/// Sets a coefficient named by axis: theta, vartheta, gamma, eta, alpha, beta
/// (both components, or one with suffix 1/2), C, delta, safety or T.
inline void set_axis(ScenarioConfig& c, const std::string& axis, double value) {
    auto& k = c.coeffs;
    if (axis == "C") { k.C = value; return; }
    if (axis == "delta") { k.delta = value; return; }
    if (axis == "safety") { k.safety = value; return; }
    if (axis == "T") {
        c.T = value;
        k.T = value;
        c.box.T = value;
        return;
    }
    const std::map<std::string, std::array<double, 2>*> fields{
        {"theta", &k.theta}, {"vartheta", &k.vartheta}, {"gamma", &k.gamma},
        {"eta", &k.eta},     {"alpha", &k.alpha},       {"beta", &k.beta}};
    std::string base = axis;
    int which = -1;
    if (!base.empty() && (base.back() == '1' || base.back() == '2')) {
        which = base.back() - '1';
        base.pop_back();
    }
    const auto it = fields.find(base);
    if (it == fields.end()) throw stage_failure(ExitCode::usage, "invalid scan axis '" + axis + "'");
    if (which < 0)
        *it->second = {value, value};
    else
        (*it->second)[std::size_t(which)] = value;
}

struct ScanRow {
    double value = 0.0;
    std::string status;  // satisfied | unsatisfied | not_verifiable | domain_error | infeasible | error
    bool satisfied = false;
    double min_margin = NAN;
    std::optional<bool> converged;
    std::optional<double> contraction;
    std::string message;
};

/// Verdict (and optionally a solve) per value of one coefficient.
inline std::vector<ScanRow> grid_scan(const ScenarioConfig& base, const std::string& axis,
                                      const std::vector<double>& values, bool with_solve = false) {
    if (base.theorem == "none") throw stage_failure(ExitCode::usage, "scan needs run.theorem");
    if (values.empty()) throw stage_failure(ExitCode::usage, "scan needs at least one value");
    {
        ScenarioConfig probe_axis = base;
        set_axis(probe_axis, axis, 0.0);
    }
    std::vector<ScanRow> rows;
    for (double value : values) {
        ScenarioConfig c = base;
        set_axis(c, axis, value);
        ScanRow row;
        row.value = value;
        try {
            const auto cs = compile(c);
            const auto v = evaluate_verdict(c, cs.xi_norms);
            row.status = to_string(v.status);
            row.satisfied = v.satisfied;
            row.min_margin = v.min_margin();
            if (with_solve) {
                try {
                    const auto r = solve(cs, &v);
                    row.converged = r.converged;
                    try {
                        row.contraction = contraction_estimate(r);
                    } catch (const insufficient_data&) {
                    }
                } catch (const error& e) {
                    row.converged = false;
                    row.message = e.what();
                }
            }
        } catch (const domain_error& e) {
            row.status = "domain_error";
            row.message = e.what();
        } catch (const infeasible_constant& e) {
            row.status = "infeasible";
            row.message = e.what();
        } catch (const error& e) {
            row.status = "error";
            row.message = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string scan_csv(const std::string& axis, const std::vector<ScanRow>& rows) {
    std::string out = "axis,value,status,satisfied,min_margin,converged,contraction\n";
    for (const auto& r : rows)
        out += axis + "," + csv_number(r.value) + "," + r.status + "," + (r.satisfied ? "true" : "false") + "," +
               (std::isnan(r.min_margin) ? "" : csv_number(r.min_margin)) + "," +
               (r.converged ? (*r.converged ? "true" : "false") : "") + "," +
               (r.contraction ? csv_number(*r.contraction) : "") + "\n";
    return out;
}

inline json to_json(const std::string& axis, const std::vector<ScanRow>& rows) {
    json a = json::array();
    for (const auto& r : rows)
        a.push_back({{"value", num(r.value)},
                     {"status", r.status},
                     {"satisfied", r.satisfied},
                     {"min_margin", num(r.min_margin)},
                     {"converged", r.converged ? json(*r.converged) : json(nullptr)},
                     {"contraction", r.contraction ? num(*r.contraction) : json(nullptr)},
                     {"message", r.message}});
    return {{"axis", axis}, {"rows", a}};
}

namespace detail {

inline json empty_report(const ScenarioConfig& c, Verb verb) {
    return {{"schema_version", schema_version},
            {"scenario", c.name},
            {"verb", to_string(verb)},
            {"status", {{"exit_code", 0}, {"stage", "ok"}, {"message", ""}}},
            {"config", config_to_json(c)},
            {"lattice", nullptr},
            {"terminal_norms", nullptr},
            {"certificates", json::array()},
            {"verdict", nullptr},
            {"solve", nullptr},
            {"probe", nullptr},
            {"ladder", nullptr},
            {"scan", nullptr},
            {"diagnostics", json::array()}};
}

inline json lattice_json(const Lattice& lat) {
    return {{"T", lat.horizon()},
            {"N", lat.steps()},
            {"d", lat.dim()},
            {"topology", to_string(lat.topology())},
            {"dt", lat.dt()},
            {"terminal_nodes", lat.nodes_at(lat.steps())},
            {"total_nodes", lat.total_nodes()}};
}

inline void fail(RunOutcome& out, ExitCode code, const std::string& message) {
    out.code = code;
    out.report["status"] = {{"exit_code", int(code)}, {"stage", stage_name(code)}, {"message", message}};
}

}  // namespace detail

/// Runs one scenario in memory. Nothing is written; see write_outputs.
inline RunOutcome run_scenario(const ScenarioConfig& c, Verb verb, const ScanRequest& scan = {}) {
    RunOutcome out;
    out.report = detail::empty_report(c, verb);
    auto& rep = out.report;
    auto diag = [&](const std::string& s) { rep["diagnostics"].push_back(s); };
    try {
        if (verb == Verb::ladder) {
            std::vector<int> Ns = c.ladder.empty() ? std::vector<int>{c.N} : c.ladder;
            std::vector<LadderRow> rows;
            try {
                rows = convergence_ladder(c, Ns);
            } catch (const oracle_inapplicable& e) {
                throw stage_failure(ExitCode::config, e.what());
            } catch (const stage_failure&) {
                throw;
            } catch (const config_error& e) {
                throw stage_failure(ExitCode::config, e.what());
            } catch (const error& e) {
                throw stage_failure(ExitCode::solver, e.what());
            }
            rep["ladder"] = to_json(rows);
            out.csv["ladder.csv"] = ladder_csv(rows);
            return out;
        }
        if (verb == Verb::scan) {
            const auto rows = grid_scan(c, scan.axis, scan.values, scan.solve);
            rep["scan"] = to_json(scan.axis, rows);
            out.csv["scan.csv"] = scan_csv(scan.axis, rows);
            return out;
        }

        const auto cs = compile(c);
        rep["lattice"] = detail::lattice_json(cs.lattice);
        rep["terminal_norms"] = num_array(cs.xi_norms);

        const bool theorem_mode = c.mode == "theorem";
        if (theorem_mode && c.certify) {
            std::vector<CoefficientCertificate> certs;
            try {
                certs = certify(cs);
            } catch (const error& e) {
                throw stage_failure(ExitCode::certificate, e.what());
            }
            bool ok = true;
            for (const auto& cert : certs) {
                rep["certificates"].push_back(to_json(cert));
                ok = ok && cert.passed();
            }
            if (!ok) throw stage_failure(ExitCode::certificate, "claimed coefficients are not certified by sampling");
        }

        std::optional<ConditionVerdict> verdict;
        if (c.theorem != "none") {
            try {
                verdict = evaluate_verdict(c, cs.xi_norms);
            } catch (const stage_failure&) {
                throw;
            } catch (const error& e) {
                throw stage_failure(ExitCode::condition, e.what());
            }
            rep["verdict"] = to_json(*verdict);
            if (!verdict->satisfied)
                diag(std::string("verdict ") + to_string(verdict->status) + ": solve is diagnostic only");
        }
        if (verb == Verb::check) return out;

        const ConditionVerdict* vp = verdict ? &*verdict : nullptr;
        SolveReport sr;
        try {
            sr = solve(cs, vp);
        } catch (const config_error& e) {
            throw stage_failure(ExitCode::config, e.what());
        } catch (const error& e) {
            throw stage_failure(ExitCode::solver, e.what());
        }
        rep["solve"] = to_json(sr);
        if (!sr.converged) diag("fixed point did not converge within max_iter");
        if (!sr.memberships_held()) diag("a predicted bound was exceeded");
        out.csv["iterations.csv"] = iterations_csv(sr);
        out.csv["profile.csv"] = profile_csv(sr);

        const int restarts = verb == Verb::probe ? std::max(c.restarts, 1) : c.restarts;
        if (restarts > 0) {
            try {
                rep["probe"] = to_json(probe(cs, vp, restarts));
            } catch (const error& e) {
                throw stage_failure(ExitCode::solver, std::string("probe: ") + e.what());
            }
            if (!rep["probe"]["passed"].get<bool>()) diag("uniqueness probe found disagreement or non-convergence");
        }
    } catch (const stage_failure& e) {
        detail::fail(out, e.code(), e.what());
        out.csv.clear();
    } catch (const config_error& e) {
        detail::fail(out, ExitCode::config, e.what());
        out.csv.clear();
    }
    return out;
}

/// Writes <dir>/<report> and the CSV files. Returns ExitCode::output on I/O failure.
inline ExitCode write_outputs(const RunOutcome& o, const ScenarioConfig& c, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) return ExitCode::output;
    auto write = [&](const fs::path& p, const std::string& text) {
        std::ofstream f(p, std::ios::binary);
        f << text;
        return bool(f);
    };
    if (!write(dir / c.report, o.report.dump(2) + "\n")) return ExitCode::output;
    if (c.csv)
        for (const auto& [name, text] : o.csv)
            if (!write(dir / name, text)) return ExitCode::output;
    return o.code;
}

}  // namespace qbsde::harness
