#pragma once

// Scenario files: one JSON document per scenario with blocks lattice, system,
// coefficients, run and output. Driver strings may reference coefficients as
// {theta1}, {vartheta2}, {C}, ... which are substituted before parsing, so a
// scan over a coefficient moves the drivers with it.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "qbsde/conditions.hpp"
#include "qbsde/error.hpp"
#include "qbsde/generators.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/solver1d.hpp"

namespace qbsde::harness {

using json = nlohmann::json;

enum class ExitCode : int {
    ok = 0,
    usage = 2,
    config = 3,
    parse = 4,
    separation = 5,
    certificate = 6,
    lattice = 7,
    condition = 8,
    solver = 9,
    output = 10,
};

inline const char* stage_name(ExitCode c) {
    switch (c) {
        case ExitCode::ok: return "ok";
        case ExitCode::usage: return "usage";
        case ExitCode::config: return "config";
        case ExitCode::parse: return "parse";
        case ExitCode::separation: return "separation";
        case ExitCode::certificate: return "certificate";
        case ExitCode::lattice: return "lattice";
        case ExitCode::condition: return "condition";
        case ExitCode::solver: return "solver";
        default: return "output";
    }
}

/// A pipeline stage failed; carries the exit code of that stage.
class stage_failure : public error {
public:
    stage_failure(ExitCode code, const std::string& what) : error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

struct TerminalSpec {
    std::string type = "constant";  // constant | sign | tanh | clipped_linear | indicator
    double value = 0.0;
    double scale = 1.0;
    double slope = 1.0;
    double clip = 1.0;
    double threshold = 0.0;
    int coord = 1;
};

struct ComponentBlock {
    std::string f;
    std::string h;
    std::string g;
    TerminalSpec terminal;
};

struct ScenarioConfig {
    std::string name = "scenario";

    // lattice
    double T = 1.0;
    int N = 16;
    int d = 1;
    Topology topology = Topology::tree;
    double node_budget = default_node_budget;

    // system
    int n = 2;
    std::string map = "full";  // z_coupled | full | y_coupled
    bool coordinate_access = false;
    std::vector<ComponentBlock> components;

    CoeffSet coeffs;

    // run
    std::string theorem = "none";  // thm21 | thm22 | thm23 | thm31 | thm32 | none
    std::string mode = "theorem";  // theorem | explore
    double tol = 1e-9;
    int max_iter = 200;
    Scheme scheme = Scheme::explicit_euler;
    int restarts = 0;
    std::uint64_t seed = 1;
    std::vector<int> ladder;
    bool certify = true;
    SamplingBox box;
    int grid = 5;

    // output
    std::string report = "report.json";
    bool csv = true;
    int verbosity = 1;
};

namespace detail {

inline void check_keys(const json& j, const std::string& block, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw config_error("'" + block + "' must be an object");
    for (const auto& [key, val] : j.items())
        if (!allowed.count(key)) throw config_error("unknown key '" + key + "' in block '" + block + "'");
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& block) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error("bad value for '" + block + "." + key + "': " + e.what());
    }
}

inline std::array<double, 2> pair_or(const json& j, const char* key, std::array<double, 2> fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_number()) return {v.get<double>(), v.get<double>()};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
        return {v[0].get<double>(), v[1].get<double>()};
    throw config_error("coefficients." + std::string(key) + " must be a number or a pair of numbers");
}

inline Topology parse_topology(const std::string& s) {
    if (s == "tree") return Topology::tree;
    if (s == "recombining") return Topology::recombining;
    throw config_error("lattice.topology must be 'tree' or 'recombining', got '" + s + "'");
}

inline Scheme parse_scheme(const std::string& s) {
    if (s == "explicit") return Scheme::explicit_euler;
    if (s == "implicit") return Scheme::implicit_euler;
    throw config_error("run.scheme must be 'explicit' or 'implicit', got '" + s + "'");
}

inline std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline TerminalSpec terminal_from_json(const json& j) {
    detail::check_keys(j, "terminal", {"type", "value", "scale", "slope", "clip", "threshold", "coord"});
    TerminalSpec t;
    t.type = detail::get_or<std::string>(j, "type", "constant", "terminal");
    static const std::set<std::string> types{"constant", "sign", "tanh", "clipped_linear", "indicator"};
    if (!types.count(t.type)) throw config_error("unknown terminal type '" + t.type + "'");
    t.value = detail::get_or<double>(j, "value", 0.0, "terminal");
    t.scale = detail::get_or<double>(j, "scale", 1.0, "terminal");
    t.slope = detail::get_or<double>(j, "slope", 1.0, "terminal");
    t.clip = detail::get_or<double>(j, "clip", 1.0, "terminal");
    t.threshold = detail::get_or<double>(j, "threshold", 0.0, "terminal");
    t.coord = detail::get_or<int>(j, "coord", 1, "terminal");
    for (double v : {t.value, t.scale, t.slope, t.clip, t.threshold})
        if (!std::isfinite(v)) throw config_error("terminal parameters must be finite");
    if (!(t.clip >= 0.0)) throw config_error("terminal.clip must be >= 0");
    return t;
}

inline json terminal_to_json(const TerminalSpec& t) {
    return {{"type", t.type}, {"value", t.value},         {"scale", t.scale}, {"slope", t.slope},
            {"clip", t.clip}, {"threshold", t.threshold}, {"coord", t.coord}};
}

inline ScenarioConfig config_from_json(const json& j) {
    detail::check_keys(j, "scenario", {"name", "lattice", "system", "coefficients", "run", "output"});
    ScenarioConfig c;
    c.name = detail::get_or<std::string>(j, "name", "scenario", "scenario");

    const json lat = j.value("lattice", json::object());
    detail::check_keys(lat, "lattice", {"T", "N", "d", "topology", "node_budget"});
    c.T = detail::get_or<double>(lat, "T", 1.0, "lattice");
    c.N = detail::get_or<int>(lat, "N", 16, "lattice");
    c.d = detail::get_or<int>(lat, "d", 1, "lattice");
    c.topology = detail::parse_topology(detail::get_or<std::string>(lat, "topology", "tree", "lattice"));
    c.node_budget = detail::get_or<double>(lat, "node_budget", default_node_budget, "lattice");

    if (!j.contains("system")) throw config_error("missing block 'system'");
    const json& sys = j.at("system");
    detail::check_keys(sys, "system", {"n", "map", "coordinate_access", "components"});
    c.n = detail::get_or<int>(sys, "n", 2, "system");
    c.map = detail::get_or<std::string>(sys, "map", "full", "system");
    if (c.map != "z_coupled" && c.map != "full" && c.map != "y_coupled")
        throw config_error("system.map must be z_coupled, full or y_coupled, got '" + c.map + "'");
    c.coordinate_access = detail::get_or<bool>(sys, "coordinate_access", false, "system");
    if (!sys.contains("components") || !sys.at("components").is_array())
        throw config_error("system.components must be an array");
    for (const auto& cj : sys.at("components")) {
        detail::check_keys(cj, "component", {"f", "h", "g", "terminal"});
        ComponentBlock b;
        b.f = detail::get_or<std::string>(cj, "f", "", "component");
        b.h = detail::get_or<std::string>(cj, "h", "", "component");
        b.g = detail::get_or<std::string>(cj, "g", "", "component");
        b.terminal = terminal_from_json(cj.value("terminal", json::object()));
        c.components.push_back(std::move(b));
    }
    if (c.n < 1) throw config_error("system.n must be >= 1");
    if (int(c.components.size()) != c.n)
        throw config_error("system.n is " + std::to_string(c.n) + " but " + std::to_string(c.components.size()) +
                           " components are given");
    if (c.map != "y_coupled" && c.n > 2) throw config_error("separated maps support n <= 2");

    const json co = j.value("coefficients", json::object());
    detail::check_keys(co, "coefficients", {"theta", "vartheta", "gamma", "eta", "alpha", "beta", "C", "delta",
                                            "safety", "unsquared_variant"});
    c.coeffs.theta = detail::pair_or(co, "theta", {0.0, 0.0});
    c.coeffs.vartheta = detail::pair_or(co, "vartheta", {0.0, 0.0});
    c.coeffs.gamma = detail::pair_or(co, "gamma", {0.0, 0.0});
    c.coeffs.eta = detail::pair_or(co, "eta", {0.0, 0.0});
    c.coeffs.alpha = detail::pair_or(co, "alpha", {0.0, 0.0});
    c.coeffs.beta = detail::pair_or(co, "beta", {0.0, 0.0});
    c.coeffs.C = detail::get_or<double>(co, "C", 0.0, "coefficients");
    c.coeffs.delta = detail::get_or<double>(co, "delta", 0.5, "coefficients");
    c.coeffs.safety = detail::get_or<double>(co, "safety", 0.5, "coefficients");
    c.coeffs.unsquared_variant = detail::get_or<bool>(co, "unsquared_variant", false, "coefficients");
    c.coeffs.T = c.T;

    const json run = j.value("run", json::object());
    detail::check_keys(run, "run", {"theorem", "mode", "tol", "max_iter", "scheme", "restarts", "seed", "ladder",
                                    "certify", "box", "grid"});
    c.theorem = detail::get_or<std::string>(run, "theorem", "none", "run");
    static const std::set<std::string> theorems{"thm21", "thm22", "thm23", "thm31", "thm32", "none"};
    if (!theorems.count(c.theorem)) throw config_error("unknown run.theorem '" + c.theorem + "'");
    c.mode = detail::get_or<std::string>(run, "mode", "theorem", "run");
    if (c.mode != "theorem" && c.mode != "explore") throw config_error("run.mode must be 'theorem' or 'explore'");
    if (c.mode == "theorem" && c.theorem == "none") throw config_error("theorem mode needs run.theorem");
    c.tol = detail::get_or<double>(run, "tol", 1e-9, "run");
    if (!(c.tol > 0.0)) throw config_error("run.tol must be > 0");
    c.max_iter = detail::get_or<int>(run, "max_iter", 200, "run");
    if (c.max_iter < 1) throw config_error("run.max_iter must be >= 1");
    c.scheme = detail::parse_scheme(detail::get_or<std::string>(run, "scheme", "explicit", "run"));
    c.restarts = detail::get_or<int>(run, "restarts", 0, "run");
    if (c.restarts < 0) throw config_error("run.restarts must be >= 0");
    c.seed = detail::get_or<std::uint64_t>(run, "seed", 1, "run");
    c.ladder = detail::get_or<std::vector<int>>(run, "ladder", {}, "run");
    c.certify = detail::get_or<bool>(run, "certify", true, "run");
    if (run.contains("box")) {
        const json& b = run.at("box");
        detail::check_keys(b, "run.box", {"z_max", "y_max"});
        c.box.z_max = detail::get_or<double>(b, "z_max", 4.0, "run.box");
        c.box.y_max = detail::get_or<double>(b, "y_max", 4.0, "run.box");
    }
    c.box.T = c.T;
    c.grid = detail::get_or<int>(run, "grid", 5, "run");

    const json out = j.value("output", json::object());
    detail::check_keys(out, "output", {"report", "csv", "verbosity"});
    c.report = detail::get_or<std::string>(out, "report", "report.json", "output");
    c.csv = detail::get_or<bool>(out, "csv", true, "output");
    c.verbosity = detail::get_or<int>(out, "verbosity", 1, "output");
    return c;
}

inline json config_to_json(const ScenarioConfig& c) {
    auto pair = [](const std::array<double, 2>& a) { return json::array({a[0], a[1]}); };
    json comps = json::array();
    for (const auto& b : c.components) {
        json cj{{"terminal", terminal_to_json(b.terminal)}};
        if (!b.f.empty()) cj["f"] = b.f;
        if (!b.h.empty()) cj["h"] = b.h;
        if (!b.g.empty()) cj["g"] = b.g;
        comps.push_back(std::move(cj));
    }
    return {
        {"name", c.name},
        {"lattice",
         {{"T", c.T}, {"N", c.N}, {"d", c.d}, {"topology", to_string(c.topology)}, {"node_budget", c.node_budget}}},
        {"system", {{"n", c.n}, {"map", c.map}, {"coordinate_access", c.coordinate_access}, {"components", comps}}},
        {"coefficients",
         {{"theta", pair(c.coeffs.theta)},
          {"vartheta", pair(c.coeffs.vartheta)},
          {"gamma", pair(c.coeffs.gamma)},
          {"eta", pair(c.coeffs.eta)},
          {"alpha", pair(c.coeffs.alpha)},
          {"beta", pair(c.coeffs.beta)},
          {"C", c.coeffs.C},
          {"delta", c.coeffs.delta},
          {"safety", c.coeffs.safety},
          {"unsquared_variant", c.coeffs.unsquared_variant}}},
        {"run",
         {{"theorem", c.theorem},
          {"mode", c.mode},
          {"tol", c.tol},
          {"max_iter", c.max_iter},
          {"scheme", c.scheme == Scheme::explicit_euler ? "explicit" : "implicit"},
          {"restarts", c.restarts},
          {"seed", c.seed},
          {"ladder", c.ladder},
          {"certify", c.certify},
          {"box", {{"z_max", c.box.z_max}, {"y_max", c.box.y_max}}},
          {"grid", c.grid}}},
        {"output", {{"report", c.report}, {"csv", c.csv}, {"verbosity", c.verbosity}}},
    };
}

/// Replaces {name} placeholders by coefficient values printed with 17 digits.
inline std::string substitute_coefficients(const std::string& text, const ScenarioConfig& c) {
    std::map<std::string, double> vals{{"C", c.coeffs.C}, {"T", c.T}, {"delta", c.coeffs.delta}};
    const std::pair<const char*, const std::array<double, 2>*> arrays[] = {
        {"theta", &c.coeffs.theta}, {"vartheta", &c.coeffs.vartheta}, {"gamma", &c.coeffs.gamma},
        {"eta", &c.coeffs.eta},     {"alpha", &c.coeffs.alpha},       {"beta", &c.coeffs.beta}};
    for (const auto& [name, arr] : arrays) {
        vals[std::string(name) + "1"] = (*arr)[0];
        vals[std::string(name) + "2"] = (*arr)[1];
    }
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            out += text[i++];
            continue;
        }
        const auto close = text.find('}', i);
        if (close == std::string::npos) throw config_error("unterminated placeholder in '" + text + "'");
        const std::string key = text.substr(i + 1, close - i - 1);
        const auto it = vals.find(key);
        if (it == vals.end()) throw config_error("unknown placeholder {" + key + "} in '" + text + "'");
        out += "(" + detail::format17(it->second) + ")";
        i = close + 1;
    }
    return out;
}

/// Terminal values xi on the terminal nodes of the lattice.
inline std::vector<double> terminal_values(const Lattice& lat, const TerminalSpec& t) {
    if (t.coord < 1 || t.coord > lat.dim())
        throw config_error("terminal.coord " + std::to_string(t.coord) + " outside 1.." + std::to_string(lat.dim()));
    const int N = lat.steps();
    std::vector<double> xi(lat.nodes_at(N));
    for (std::size_t v = 0; v < xi.size(); ++v) {
        const double w = lat.walk(N, v, t.coord - 1);
        double x = 0.0;
        if (t.type == "constant")
            x = t.value;
        else if (t.type == "sign")
            x = t.scale * double((w > 0.0) - (w < 0.0));
        else if (t.type == "tanh")
            x = t.scale * std::tanh(t.slope * w);
        else if (t.type == "clipped_linear")
            x = t.scale * std::clamp(t.slope * w, -t.clip, t.clip);
        else
            x = w > t.threshold ? t.scale : 0.0;
        xi[v] = x;
    }
    return xi;
}

/// Node budget, overridable through QBSDE_NODE_BUDGET.
inline double effective_node_budget(const ScenarioConfig& c) {
    if (const char* env = std::getenv("QBSDE_NODE_BUDGET")) {
        char* end = nullptr;
        const double v = std::strtod(env, &end);
        if (end == env || *end != '\0' || !(v > 0.0))
            throw config_error(std::string("QBSDE_NODE_BUDGET must be a positive number, got '") + env + "'");
        return v;
    }
    return c.node_budget;
}

}  // namespace qbsde::harness
