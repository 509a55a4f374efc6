#pragma once

// Report serialization. Reports are JSON documents (schema_version 1, see
// schemas/report.schema.json) with sorted keys and no timestamps, so equal
// inputs give equal bytes. Non-finite numbers serialize as null.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "qbsde/conditions.hpp"
#include "qbsde/generators.hpp"
#include "qbsde/picard.hpp"

namespace qbsde::harness {

using json = nlohmann::json;

inline constexpr int schema_version = 1;

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json num_array(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

inline json to_json(const InequalityRecord& r) {
    json j{{"name", r.name},
           {"relation", r.relation == Relation::le ? "<=" : "<"},
           {"left", num(r.left)},
           {"right", num(r.right)},
           {"margin", num(r.margin)},
           {"satisfied", r.satisfied},
           {"log_scale", r.log_scale}};
    if (r.log_scale) {
        j["log_left"] = num(r.log_left);
        j["log_right"] = num(r.log_right);
    }
    return j;
}

inline json to_json(const GirsanovConstants& g) {
    return {{"K", num(g.K)},
            {"safety", g.safety},
            {"retries", g.retries},
            {"log_p_minus_1", num(g.log_p_minus_1)},
            {"p", num(g.p)},
            {"log_q", num(g.log_q)},
            {"log_C_p", num(g.log_C_p)},
            {"log_L_2q", num(g.log_L_2q)},
            {"log_K_bar", num(g.log_K_bar)},
            {"log_p_bar_minus_1", num(g.log_p_bar_minus_1)},
            {"log_q_bar", num(g.log_q_bar)},
            {"log_C_p_bar", num(g.log_C_p_bar)},
            {"log_L_2q_bar", num(g.log_L_2q_bar)},
            {"log_c1", num(g.log_c1)},
            {"log_c2", num(g.log_c2)}};
}

inline json to_json(const ConditionVerdict& v) {
    json records = json::array(), info = json::array(), constants = json::object(), bounds = json::object();
    for (const auto& r : v.records) records.push_back(to_json(r));
    for (const auto& r : v.informational) info.push_back(to_json(r));
    for (const auto& [k, x] : v.constants) constants[k] = num(x);
    for (const auto& [k, x] : v.bounds) bounds[k] = num(x);
    json j{{"theorem", v.theorem},
           {"status", to_string(v.status)},
           {"satisfied", v.satisfied},
           {"reason", v.reason},
           {"records", records},
           {"informational", info},
           {"constants", constants},
           {"bounds", bounds},
           {"safety", v.safety}};
    j["girsanov"] = v.girsanov ? to_json(*v.girsanov) : json(nullptr);
    j["girsanov_bar"] = v.girsanov_bar ? to_json(*v.girsanov_bar) : json(nullptr);
    return j;
}

inline json to_json(const CoefficientCertificate& c) {
    json entries = json::array();
    for (const auto& e : c.entries)
        entries.push_back({{"name", e.name},
                           {"claimed", num(e.claimed)},
                           {"estimate", num(e.estimate)},
                           {"passed", e.passed},
                           {"samples", e.samples}});
    return {{"component", c.component},
            {"passed", c.passed()},
            {"skipped", c.skipped},
            {"grid", c.grid},
            {"box", {{"z_max", c.box.z_max}, {"y_max", c.box.y_max}, {"T", c.box.T}}},
            {"entries", entries}};
}

inline json to_json(const MembershipRecord& m) {
    return {{"name", m.name}, {"value", num(m.value)}, {"bound", num(m.bound)}, {"slack", m.slack}, {"held", m.held}};
}

inline json to_json(const SolveReport& r) {
    json membership = json::array();
    for (const auto& m : r.membership) membership.push_back(to_json(m));
    json y0 = json::array(), sup = json::array(), bmo = json::array();
    for (std::size_t i = 0; i < r.Y.size(); ++i) {
        y0.push_back(num(r.Y[i](0, 0)));
        sup.push_back(num(sup_norm(r.Y[i])));
        bmo.push_back(num(bmo_norm(r.Z[i], 2.0)));
    }
    json estimate = nullptr;
    try {
        estimate = num(contraction_estimate(r));
    } catch (const insufficient_data&) {
    }
    return {{"map", r.map},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"distances", num_array(r.distances)},
            {"y_distances", num_array(r.y_distances)},
            {"z_distances", num_array(r.z_distances)},
            {"contraction_factors", num_array(r.contraction_factors)},
            {"contraction_estimate", estimate},
            {"windows", r.windows},
            {"window_steps", r.window_steps},
            {"window_iterations", r.window_iterations},
            {"membership", membership},
            {"memberships_held", r.memberships_held()},
            {"Y0", y0},
            {"sup_norm_Y", sup},
            {"bmo2_Z", bmo},
            {"bmo2_Z_joint", r.Z.empty() ? json(nullptr) : num(bmo_norm(hstack(r.Z), 2.0))}};
}

inline json to_json(const ProbeVerdict& p) {
    return {{"restarts", p.restarts},
            {"seed", p.seed},
            {"base_converged", p.base_converged},
            {"all_converged", p.all_converged},
            {"max_y_gap", num(p.max_y_gap)},
            {"max_z_gap", num(p.max_z_gap)},
            {"threshold", num(p.threshold)},
            {"y_gaps", num_array(p.y_gaps)},
            {"z_gaps", num_array(p.z_gaps)},
            {"passed", p.passed}};
}

inline std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// iteration,distance,y_distance,z_distance,contraction_factor
inline std::string iterations_csv(const SolveReport& r) {
    std::string out = "iteration,distance,y_distance,z_distance,contraction_factor\n";
    for (std::size_t m = 0; m < r.distances.size(); ++m) {
        out += std::to_string(m + 1) + "," + csv_number(r.distances[m]) + ",";
        out += (m < r.y_distances.size() ? csv_number(r.y_distances[m]) : "") + ",";
        out += (m < r.z_distances.size() ? csv_number(r.z_distances[m]) : "") + ",";
        out += (m > 0 ? csv_number(r.contraction_factors[m - 1]) : "") + "\n";
    }
    return out;
}

/// step,t,component,sup_abs_Y,bmo2_tail
inline std::string profile_csv(const SolveReport& r) {
    std::string out = "step,t,component,sup_abs_Y,bmo2_tail\n";
    if (r.Y.empty()) return out;
    const Lattice& lat = r.Y.front().lattice();
    for (std::size_t i = 0; i < r.Y.size(); ++i) {
        const auto prof = bmo_profile(r.Z[i], 2.0);
        for (int k = 0; k <= lat.steps(); ++k) {
            double ymax = 0.0, tail = 0.0;
            for (double v : r.Y[i].at(k)) ymax = std::max(ymax, std::abs(v));
            if (k < lat.steps())
                for (double v : prof[k]) tail = std::max(tail, v);
            out += std::to_string(k) + "," + csv_number(lat.time(k)) + "," + std::to_string(i + 1) + "," +
                   csv_number(ymax) + "," + csv_number(tail) + "\n";
        }
    }
    return out;
}

}  // namespace qbsde::harness
