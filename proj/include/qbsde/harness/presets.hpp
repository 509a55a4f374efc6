#pragma once

// Built-in scenarios. scenarios/<name>.json holds the same documents.

#include <map>
#include <string>
#include <vector>

#include "qbsde/error.hpp"
#include "qbsde/harness/scenario.hpp"

namespace qbsde::harness {

inline const std::map<std::string, std::string>& preset_sources() {
    static const std::map<std::string, std::string> presets{
        {"system2-thm21", R"json({
  "name": "system2-thm21",
  "lattice": {"T": 1, "N": 32, "d": 2, "topology": "recombining"},
  "system": {"n": 2, "map": "z_coupled", "components": [
    {"f": "0", "h": "{vartheta1}*norm2(z2)", "terminal": {"type": "sign", "scale": 0.0625, "coord": 1}},
    {"f": "0", "h": "{vartheta2}*norm2(z1)", "terminal": {"type": "sign", "scale": 0.0625, "coord": 2}}]},
  "coefficients": {"theta": 0, "vartheta": 1, "gamma": 0, "eta": 1, "alpha": 0, "beta": 0, "C": 0},
  "run": {"theorem": "thm21", "mode": "theorem", "tol": 1e-9, "max_iter": 200, "restarts": 5, "seed": 7}
})json"},
        {"system2-thm22", R"json({
  "name": "system2-thm22",
  "lattice": {"T": 1, "N": 32, "d": 2, "topology": "recombining"},
  "system": {"n": 2, "map": "z_coupled", "components": [
    {"f": "{theta1}*norm2(z1)", "h": "{vartheta1}*norm2(z2)", "terminal": {"type": "sign", "scale": 0.25, "coord": 1}},
    {"f": "{theta2}*norm2(z2)", "h": "{vartheta2}*norm2(z1)", "terminal": {"type": "sign", "scale": 0.25, "coord": 2}}]},
  "coefficients": {"theta": 1, "vartheta": 0.01, "gamma": 1, "eta": 0.01, "alpha": 0, "beta": 0, "C": 0,
                   "unsquared_variant": true},
  "run": {"theorem": "thm22", "mode": "theorem", "tol": 1e-9, "max_iter": 200, "restarts": 3, "seed": 7}
})json"},
        {"system2-violating", R"json({
  "name": "system2-violating",
  "lattice": {"T": 1, "N": 32, "d": 2, "topology": "recombining"},
  "system": {"n": 2, "map": "z_coupled", "components": [
    {"f": "0", "h": "{vartheta1}*norm2(z2)", "terminal": {"type": "sign", "scale": 0.25, "coord": 1}},
    {"f": "0", "h": "{vartheta2}*norm2(z1)", "terminal": {"type": "sign", "scale": 0.25, "coord": 2}}]},
  "coefficients": {"theta": 0, "vartheta": 1, "gamma": 0, "eta": 1, "alpha": 0, "beta": 0, "C": 0},
  "run": {"theorem": "thm21", "mode": "theorem", "tol": 1e-9, "max_iter": 60, "restarts": 0, "seed": 7}
})json"},
        {"thm23-linear", R"json({
  "name": "thm23-linear",
  "lattice": {"T": 1, "N": 64, "d": 1, "topology": "recombining"},
  "system": {"n": 1, "map": "y_coupled", "components": [
    {"g": "{beta1}*y1", "terminal": {"type": "constant", "value": 1}}]},
  "coefficients": {"theta": 1, "beta": 1, "C": 0},
  "run": {"theorem": "thm23", "mode": "theorem", "tol": 1e-9, "max_iter": 200, "scheme": "implicit",
          "restarts": 3, "seed": 5}
})json"},
        {"thm31-certified", R"json({
  "name": "thm31-certified",
  "lattice": {"T": 1, "N": 32, "d": 1, "topology": "recombining"},
  "system": {"n": 2, "map": "full", "components": [
    {"f": "{theta1}*norm2(z1)", "h": "{alpha1}*y2 + {vartheta1}*norm2(z2)",
     "terminal": {"type": "sign", "scale": 0.05, "coord": 1}},
    {"f": "{theta2}*norm2(z2)", "h": "{alpha2}*y1 + {vartheta2}*norm2(z1)",
     "terminal": {"type": "sign", "scale": 0.05, "coord": 1}}]},
  "coefficients": {"theta": 0.05, "vartheta": 0.01, "gamma": 0.1, "eta": 0.01, "alpha": 0.01, "beta": 0.01,
                   "C": 0, "delta": 0.1},
  "run": {"theorem": "thm31", "mode": "theorem", "tol": 1e-9, "max_iter": 200, "restarts": 5, "seed": 11}
})json"},
        {"thm32-certified", R"json({
  "name": "thm32-certified",
  "lattice": {"T": 1, "N": 32, "d": 1, "topology": "recombining"},
  "system": {"n": 2, "map": "full", "components": [
    {"f": "{theta1}*norm2(z1)", "h": "{alpha1}*y2 + {vartheta1}*norm2(z2)",
     "terminal": {"type": "sign", "scale": 0.01, "coord": 1}},
    {"f": "{theta2}*norm2(z2)", "h": "{alpha2}*y1 + {vartheta2}*norm2(z1)",
     "terminal": {"type": "sign", "scale": 0.01, "coord": 1}}]},
  "coefficients": {"theta": 0.001, "vartheta": 1e-18, "gamma": 1, "eta": 0.01, "alpha": 1e-9, "beta": 1e-9,
                   "C": 0},
  "run": {"theorem": "thm32", "mode": "theorem", "tol": 1e-9, "max_iter": 200, "restarts": 3, "seed": 13}
})json"},
        {"ladder-tanh", R"json({
  "name": "ladder-tanh",
  "lattice": {"T": 1, "N": 64, "d": 1, "topology": "recombining"},
  "system": {"n": 1, "map": "full", "components": [
    {"f": "{gamma1}*norm2(z1)", "terminal": {"type": "tanh", "scale": 1, "slope": 1, "coord": 1}}]},
  "coefficients": {"theta": 0.5, "gamma": 0.5, "C": 0},
  "run": {"theorem": "none", "mode": "explore", "tol": 1e-9, "max_iter": 10, "ladder": [8, 16, 32, 64]}
})json"},
    };
    return presets;
}

inline std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : preset_sources()) names.push_back(k);
    return names;
}

inline ScenarioConfig preset(const std::string& name) {
    const auto& p = preset_sources();
    const auto it = p.find(name);
    if (it == p.end()) throw config_error("unknown preset '" + name + "'");
    return config_from_json(json::parse(it->second));
}

}  // namespace qbsde::harness
