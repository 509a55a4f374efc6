#pragma once

// One-dimensional quadratic BSDEs on the lattice
//
//   Y_t = xi + int_t^T [f(s, Y_s, Z_s) + g_s] ds - int_t^T Z_s dW_s
//
// solved by backward induction: Z_k comes from the one-step martingale
// representation of Y_{k+1}, then Y_k = E[Y_{k+1} | F_k] + dt (f + g).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qbsde/error.hpp"
#include "qbsde/lattice.hpp"

namespace qbsde {

struct NodeContext {
    int step = 0;
    std::size_t node = 0;
    double t = 0.0;
};

enum class Scheme { explicit_euler, implicit_euler };

inline const char* to_string(Scheme s) { return s == Scheme::explicit_euler ? "explicit" : "implicit"; }

struct Driver1D {
    using Fn = std::function<double(const NodeContext&, double y, std::span<const double> z)>;

    Fn f;                             // endogenous part; null means f = 0
    bool depends_on_y = false;        // explicit scheme then evaluates y at the conditional mean
    std::optional<AdaptedProcess> g;  // exogenous part, read on steps 0..N-1

    // Declared growth |f(t, y, z)| <= C + beta |y| + gamma |z|^2, asserted at
    // every evaluation when check_growth is set.
    double C = 0.0;
    double gamma = 0.0;
    double beta = 0.0;
    std::optional<double> theta;
    bool check_growth = false;
};

struct SolutionPair {
    AdaptedProcess Y;
    ControlProcess Z;
    double residual = 0.0;  // max |Y_N - xi|
    Scheme scheme = Scheme::explicit_euler;
    double max_residual_energy = 0.0;  // unrepresented part of Y_{k+1} when d >= 2
    int max_inner_iterations = 0;
};

namespace detail {

inline double eval_f(const Driver1D& drv, const NodeContext& ctx, double y, std::span<const double> z) {
    if (!drv.f) return 0.0;
    const double v = drv.f(ctx, y, z);
    if (drv.check_growth) {
        double zz = 0.0;
        for (double c : z) zz += c * c;
        const double bound = drv.C + drv.beta * std::abs(y) + drv.gamma * zz;
        if (!(std::abs(v) <= bound * (1.0 + 1e-12) + 1e-300)) {
            throw growth_violation("driver growth |f| <= C + beta|y| + gamma|z|^2 fails at step " +
                                   std::to_string(ctx.step) + ", node " + std::to_string(ctx.node) +
                                   ": |f| = " + std::to_string(std::abs(v)) + " > " + std::to_string(bound));
        }
    }
    return v;
}

inline void require_terminal(const Lattice& lat, std::span<const double> xi) {
    if (xi.size() != lat.nodes_at(lat.steps()))
        throw step_mismatch("terminal values: expected " + std::to_string(lat.nodes_at(lat.steps())) +
                            ", got " + std::to_string(xi.size()));
}

}  // namespace detail

/// Backward induction on steps k_hi-1 down to k_lo, with sol.Y already set at
/// step k_hi. Used directly by the windowed fixed point.
inline void backward_steps(const Lattice& lat, const Driver1D& drv, Scheme scheme, int k_hi, int k_lo,
                           SolutionPair& sol, double tol = 1e-12, int max_inner = 200) {
    if (!(tol > 0.0)) throw invalid_parameter("solver tolerance must be > 0");
    if (k_lo < 0 || k_hi > lat.steps() || k_lo > k_hi) throw step_mismatch("backward_steps: bad step range");
    if (drv.g) detail::require_same(lat, drv.g->lattice(), "exogenous driver");
    const int d = lat.dim();
    const double dt = lat.dt();
    for (int k = k_hi - 1; k >= k_lo; --k) {
        const auto rep = represent_martingale(lat, k, sol.Y.at(k + 1));
        sol.max_residual_energy = std::max(sol.max_residual_energy, rep.max_residual_energy());
        auto yk = sol.Y.at(k);
        auto zk = sol.Z.at(k);
        std::copy(rep.z.begin(), rep.z.end(), zk.begin());
        for (std::size_t v = 0; v < yk.size(); ++v) {
            const NodeContext ctx{k, v, lat.time(k)};
            const std::span<const double> z(rep.z.data() + v * std::size_t(d), std::size_t(d));
            const double gk = drv.g ? (*drv.g)(k, v) : 0.0;
            const double mean = rep.mean[v];
            if (scheme == Scheme::explicit_euler || !drv.depends_on_y) {
                yk[v] = mean + dt * (detail::eval_f(drv, ctx, mean, z) + gk);
                continue;
            }
            double y = mean;
            int it = 0;
            for (;; ++it) {
                if (it >= max_inner)
                    throw divergence_error("implicit step did not converge in " + std::to_string(max_inner) +
                                           " iterations at step " + std::to_string(k) + ", node " +
                                           std::to_string(v));
                const double target = mean + dt * (detail::eval_f(drv, ctx, y, z) + gk);
                const double next = 0.5 * y + 0.5 * target;
                if (!std::isfinite(next))
                    throw divergence_error("implicit step diverged at step " + std::to_string(k));
                const double change = std::abs(next - y);
                y = next;
                if (change <= tol) break;
            }
            sol.max_inner_iterations = std::max(sol.max_inner_iterations, it + 1);
            yk[v] = y;
        }
    }
}

inline SolutionPair solve_backward(const Lattice& lat, std::span<const double> xi, const Driver1D& drv,
                                   Scheme scheme = Scheme::explicit_euler, double tol = 1e-12,
                                   int max_inner = 200) {
    detail::require_terminal(lat, xi);
    SolutionPair sol{AdaptedProcess(lat), ControlProcess(lat), 0.0, scheme};
    auto yN = sol.Y.at(lat.steps());
    std::copy(xi.begin(), xi.end(), yN.begin());
    backward_steps(lat, drv, scheme, lat.steps(), 0, sol, tol, max_inner);
    double r = 0.0;
    for (std::size_t v = 0; v < xi.size(); ++v) r = std::max(r, std::abs(yN[v] - xi[v]));
    sol.residual = r;
    return sol;
}

/// Pure-quadratic driver f(z) = gamma |z|^2.
inline Driver1D pure_quadratic(double gamma) {
    Driver1D d;
    d.f = [gamma](const NodeContext&, double, std::span<const double> z) {
        double s = 0.0;
        for (double c : z) s += c * c;
        return gamma * s;
    };
    d.gamma = gamma;
    d.theta = gamma;
    return d;
}

/// Y_t = (1/2gamma) log E[exp(2 gamma xi + 2 gamma sum_{s>=t} g_s dt) | F_t], the
/// exponential-transform solution for f(z) = gamma |z|^2. Computed in log space
/// with a shift by the maximum child at every node.
inline AdaptedProcess cole_hopf_oracle(const Lattice& lat, double gamma, std::span<const double> xi,
                                       const AdaptedProcess* g = nullptr) {
    if (!(gamma > 0.0)) throw invalid_parameter("cole_hopf_oracle needs gamma > 0");
    detail::require_terminal(lat, xi);
    if (g) detail::require_same(lat, g->lattice(), "cole_hopf_oracle");
    const double two_g = 2.0 * gamma;
    AdaptedProcess logv(lat);
    auto last = logv.at(lat.steps());
    for (std::size_t v = 0; v < xi.size(); ++v) last[v] = two_g * xi[v];
    const int b = lat.branching();
    for (int k = lat.steps() - 1; k >= 0; --k) {
        const auto nxt = logv.at(k + 1);
        auto cur = logv.at(k);
        for (std::size_t v = 0; v < cur.size(); ++v) {
            double m = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < b; ++c) m = std::max(m, nxt[lat.child(k, v, c)]);
            double s = 0.0;
            for (int c = 0; c < b; ++c) s += std::exp(nxt[lat.child(k, v, c)] - m);
            cur[v] = m + std::log(s / b) + (g ? two_g * (*g)(k, v) * lat.dt() : 0.0);
        }
    }
    for (int k = 0; k <= lat.steps(); ++k)
        for (double& v : logv.at(k)) v /= two_g;
    return logv;
}

struct LemmaABounds {
    double ybound = 0.0;
    double zbound = 0.0;
};

/// A-priori bounds for the 1-d equation driven by f(z) + g with g built from a
/// frozen control of BMO norm zBMO: sup |Y| and ||Z.W||_BMO.
inline LemmaABounds lemma_a_bounds(double gamma, double C, double xi_norm, double z_bmo, double T) {
    if (!(gamma > 0.0)) throw domain_error("lemma_a_bounds needs gamma > 0");
    if (!(T > 0.0)) throw domain_error("lemma_a_bounds needs T > 0");
    const double s = 2.0 * gamma * z_bmo * z_bmo;
    if (!(s < 1.0)) throw domain_error("lemma_a_bounds needs 2 gamma ||z.W||^2 < 1");
    LemmaABounds b;
    b.ybound = xi_norm + C * T + std::log(1.0 / (1.0 - s)) / (2.0 * gamma);
    const double gct = 2.0 * gamma * C * T;
    b.zbound = std::exp(gamma * xi_norm) / (std::sqrt(2.0) * gamma) *
               std::sqrt(1.0 + std::exp(gct) * (gct + s) / (1.0 - s));
    return b;
}

struct A4Verdict {
    double xi_bmo1 = 0.0;
    double xi_threshold = 0.0;  // 1/(16 gamma)
    bool xi_ok = false;
    double z_bmo = 0.0;
    double z_threshold = 0.0;  // 1/sqrt(4 gamma)
    bool z_ok = false;
    bool satisfied = false;
};

/// BMO_1 of the martingale E[xi | F_.] - E[xi] against 1/(16 gamma), and
/// ||z.W||_BMO against 1/sqrt(4 gamma). BMO_1 needs path enumeration, so the
/// tree topology is required.
inline A4Verdict check_a4(const Lattice& lat, std::span<const double> xi, double gamma, const ControlProcess& z) {
    if (!(gamma > 0.0)) throw domain_error("check_a4 needs gamma > 0");
    detail::require_same(lat, z.lattice(), "check_a4");
    const auto mart = solve_backward(lat, xi, Driver1D{});
    A4Verdict v;
    v.xi_bmo1 = bmo_norm(mart.Z, 1.0);
    v.xi_threshold = 1.0 / (16.0 * gamma);
    v.xi_ok = v.xi_bmo1 < v.xi_threshold;
    v.z_bmo = bmo_norm(z, 2.0);
    v.z_threshold = 1.0 / std::sqrt(4.0 * gamma);
    v.z_ok = v.z_bmo < v.z_threshold;
    v.satisfied = v.xi_ok && v.z_ok;
    return v;
}

struct ComparisonVerdict {
    double min_difference = 0.0;  // min over nodes of (Y~ - Y)
    double tolerance = 0.0;
    double violation = 0.0;       // max(0, -min_difference)
    bool passed = false;
};

/// Nodewise ordering check Y~ >= Y. The default tolerance is
/// 10 * machine epsilon * max(1, sup|Y|, sup|Y~|).
inline ComparisonVerdict compare_solutions(const SolutionPair& sol, const SolutionPair& other,
                                           std::optional<double> tolerance = std::nullopt) {
    detail::require_same(sol.Y.lattice(), other.Y.lattice(), "compare_solutions");
    ComparisonVerdict v;
    v.min_difference = std::numeric_limits<double>::infinity();
    const Lattice& lat = sol.Y.lattice();
    for (int k = 0; k <= lat.steps(); ++k) {
        const auto a = sol.Y.at(k), b = other.Y.at(k);
        for (std::size_t i = 0; i < a.size(); ++i) v.min_difference = std::min(v.min_difference, b[i] - a[i]);
    }
    const double scale = std::max({1.0, sup_norm(sol.Y), sup_norm(other.Y)});
    v.tolerance = tolerance.value_or(10.0 * std::numeric_limits<double>::epsilon() * scale);
    v.violation = std::max(0.0, -v.min_difference);
    v.passed = v.min_difference >= -v.tolerance;
    return v;
}

}  // namespace qbsde
