#pragma once

// Fixed-point drivers for coupled systems. A sweep freezes the current iterate
// (y, z), turns the coupling into an exogenous driver and solves each component
// as a one-dimensional equation:
//
//   z-coupled  (z^1, z^2) -> (Z^1, Z^2),  g^i = f^i(z^i) + h^i(z frozen)
//   full       (y, z) -> (Y, Z),          g^i = f^i(z^i) + h^i(y, z frozen)
//   y-coupled  y -> Y on windows of length 1/(2 beta n), pasted backwards

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qbsde/conditions.hpp"
#include "qbsde/error.hpp"
#include "qbsde/lattice.hpp"
#include "qbsde/solver1d.hpp"

namespace qbsde {

struct SystemComponent {
    using FFn = std::function<double(const NodeContext&, std::span<const double> zi)>;
    using HFn = std::function<double(const NodeContext&, std::span<const double> y, std::span<const double> z)>;
    using GFn = std::function<double(const NodeContext&, std::span<const double> y, std::span<const double> zi)>;

    std::vector<double> terminal;
    FFn f;  // f^i(t, z^i)
    HFn h;  // h^i(t, y, z), z stacked as n*d
    GFn g;  // joint g^i(t, y, z^i) for the windowed map
    double C = 0.0;
    double gamma = 0.0;
    bool check_growth = false;
};

struct SystemSpec {
    Lattice lattice;
    std::vector<SystemComponent> components;
    int n() const { return int(components.size()); }
};

struct Iterate {
    std::vector<AdaptedProcess> y;
    std::vector<ControlProcess> z;
};

struct MembershipRecord {
    std::string name;
    double value = 0.0;
    double bound = 0.0;
    double slack = 0.0;
    bool held = false;
};

struct SolveReport {
    std::string map;
    bool converged = false;
    int iterations = 0;
    std::vector<double> distances;
    std::vector<double> y_distances;
    std::vector<double> z_distances;
    std::vector<double> contraction_factors;  // distances[m] / distances[m-1]
    std::vector<AdaptedProcess> Y;
    std::vector<ControlProcess> Z;
    std::vector<MembershipRecord> membership;
    int windows = 0;
    int window_steps = 0;
    std::vector<int> window_iterations;
    double wall_time = 0.0;  // seconds; not part of any serialized report

    bool memberships_held() const {
        return std::all_of(membership.begin(), membership.end(), [](const auto& m) { return m.held; });
    }
};

struct PicardOptions {
    double tol = 1e-9;
    int max_iter = 200;
    Scheme scheme = Scheme::explicit_euler;
    double inner_tol = 1e-12;
    int max_inner = 200;
    double slack = 0.05;
    std::map<std::string, double> bounds;  // predicted bounds from a verdict
    std::optional<Iterate> initial;
};

namespace detail {

inline void require_system(const SystemSpec& s) {
    if (s.components.empty()) throw invalid_parameter("system has no components");
    for (const auto& c : s.components) require_terminal(s.lattice, c.terminal);
}

inline Iterate zero_iterate(const SystemSpec& s) {
    Iterate it;
    for (int i = 0; i < s.n(); ++i) {
        it.y.emplace_back(s.lattice);
        it.z.emplace_back(s.lattice);
    }
    return it;
}

inline void set_growth(Driver1D& drv, const SystemComponent& c) {
    drv.C = c.C;
    drv.gamma = c.gamma;
    drv.check_growth = c.check_growth;
}

inline double sup_vector_norm(const std::vector<AdaptedProcess>& y) {
    const Lattice& lat = y.front().lattice();
    double best = 0.0;
    for (int k = 0; k <= lat.steps(); ++k) {
        for (std::size_t v = 0; v < lat.nodes_at(k); ++v) {
            double s = 0.0;
            for (const auto& p : y) s += p(k, v) * p(k, v);
            best = std::max(best, std::sqrt(s));
        }
    }
    return best;
}

inline void finish_report(SolveReport& r, double tol) {
    r.contraction_factors.clear();
    for (std::size_t m = 1; m < r.distances.size(); ++m) {
        const double prev = r.distances[m - 1];
        r.contraction_factors.push_back(prev > 0.0 ? r.distances[m] / prev : 0.0);
    }
    if (r.converged && !r.distances.empty() && !(r.distances.back() <= tol)) r.converged = false;
}

inline MembershipRecord membership(std::string name, double value, double bound, double slack) {
    return {std::move(name), value, bound, slack, value <= bound * (1.0 + slack)};
}

}  // namespace detail

/// Exogenous coupling processes h^i(t, y_t, z_t) on the frozen iterate.
inline std::vector<AdaptedProcess> coupling_processes(const SystemSpec& spec, const Iterate& frozen) {
    const Lattice& lat = spec.lattice;
    const int n = spec.n(), d = lat.dim();
    std::vector<AdaptedProcess> out(static_cast<std::size_t>(n), AdaptedProcess(lat));
    std::vector<double> y(static_cast<std::size_t>(n)), z(std::size_t(n) * std::size_t(d));
    for (int k = 0; k < lat.steps(); ++k) {
        for (std::size_t v = 0; v < lat.nodes_at(k); ++v) {
            for (int i = 0; i < n; ++i) {
                y[i] = frozen.y[i](k, v);
                const auto row = frozen.z[i].row(k, v);
                std::copy(row.begin(), row.end(), z.begin() + std::ptrdiff_t(i) * d);
            }
            const NodeContext ctx{k, v, lat.time(k)};
            for (int i = 0; i < n; ++i)
                if (spec.components[i].h) out[i](k, v) = spec.components[i].h(ctx, y, z);
        }
    }
    return out;
}

/// One application of the separated map: component i solves the 1-d equation
/// with endogenous f^i and exogenous h^i evaluated on the frozen iterate.
inline std::vector<SolutionPair> apply_map(const SystemSpec& spec, const Iterate& frozen,
                                           const PicardOptions& opt = {}) {
    auto g = coupling_processes(spec, frozen);
    std::vector<SolutionPair> out;
    for (int i = 0; i < spec.n(); ++i) {
        const auto& c = spec.components[i];
        Driver1D drv;
        if (c.f) drv.f = [f = c.f](const NodeContext& ctx, double, std::span<const double> z) { return f(ctx, z); };
        drv.g = std::move(g[i]);
        detail::set_growth(drv, c);
        out.push_back(solve_backward(spec.lattice, c.terminal, drv, opt.scheme, opt.inner_tol, opt.max_inner));
    }
    return out;
}

namespace detail {

enum class MapKind { z_coupled, full };

inline SolveReport run_separated(const SystemSpec& spec, const PicardOptions& opt, MapKind kind) {
    require_system(spec);
    if (!(opt.tol > 0.0)) throw invalid_parameter("picard tolerance must be > 0");
    const auto t0 = std::chrono::steady_clock::now();
    SolveReport r;
    r.map = kind == MapKind::z_coupled ? "z_coupled" : "full";
    Iterate cur = opt.initial ? *opt.initial : zero_iterate(spec);
    const int n = spec.n();
    for (int it = 1; it <= opt.max_iter; ++it) {
        auto sols = apply_map(spec, cur, opt);
        double ydist = 0.0, zmax = 0.0, zsum = 0.0;
        Iterate next;
        for (int i = 0; i < n; ++i) {
            ydist = std::max(ydist, sup_distance(sols[i].Y, cur.y[i]));
            const double zd = bmo_norm(sols[i].Z - cur.z[i], 2.0);
            zmax = std::max(zmax, zd);
            zsum += zd;
            next.y.push_back(std::move(sols[i].Y));
            next.z.push_back(std::move(sols[i].Z));
        }
        const double dist = kind == MapKind::z_coupled ? zmax : std::max(ydist, zsum);
        if (!std::isfinite(dist)) {
            r.iterations = it;
            r.distances.push_back(dist);
            r.y_distances.push_back(ydist);
            r.z_distances.push_back(kind == MapKind::z_coupled ? zmax : zsum);
            cur = std::move(next);
            break;
        }
        r.iterations = it;
        r.distances.push_back(dist);
        r.y_distances.push_back(ydist);
        r.z_distances.push_back(kind == MapKind::z_coupled ? zmax : zsum);
        cur = std::move(next);
        if (dist <= opt.tol) {
            r.converged = true;
            break;
        }
    }
    r.Y = std::move(cur.y);
    r.Z = std::move(cur.z);

    const double s = opt.slack;
    if (kind == MapKind::z_coupled) {
        for (int i = 0; i < n; ++i) {
            const auto key = "z_bmo_" + std::to_string(i + 1);
            if (auto b = opt.bounds.find(key); b != opt.bounds.end())
                r.membership.push_back(membership("bmo(Z^" + std::to_string(i + 1) + ")", bmo_norm(r.Z[i], 2.0),
                                                  b->second, s));
        }
    } else {
        if (auto b = opt.bounds.find("y_sup"); b != opt.bounds.end())
            r.membership.push_back(membership("sup|Y|", sup_vector_norm(r.Y), b->second, 0.0));
        if (auto b = opt.bounds.find("z_bmo"); b != opt.bounds.end())
            r.membership.push_back(membership("bmo(Z)", bmo_norm(hstack(r.Z), 2.0), b->second, s));
    }
    finish_report(r, opt.tol);
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace detail

/// Cross-quadratic map: stops when max_i bmo_2(Z^i - z^i) <= tol. Membership
/// is checked against bounds "z_bmo_1", "z_bmo_2" when supplied.
inline SolveReport picard_z_coupled(const SystemSpec& spec, const PicardOptions& opt = {}) {
    return detail::run_separated(spec, opt, detail::MapKind::z_coupled);
}

/// Fully coupled separated map: stops when max(sup|Y - y|, sum_i bmo_2(Z^i - z^i))
/// <= tol. Membership uses bounds "y_sup" (exact) and "z_bmo" (with slack).
inline SolveReport picard_full(const SystemSpec& spec, const PicardOptions& opt = {}) {
    return detail::run_separated(spec, opt, detail::MapKind::full);
}

struct WindowPlan {
    double lambda = 0.0;
    int steps_per_window = 0;
    int windows = 0;
};

/// Windows of length lambda = 1/(2 beta n), rounded down to the grid.
inline WindowPlan plan_windows(const Lattice& lat, double beta, int n) {
    if (!(beta > 0.0)) throw domain_error("windowed map needs beta > 0");
    WindowPlan w;
    w.lambda = 1.0 / (2.0 * beta * n);
    w.steps_per_window = int(std::floor(w.lambda / lat.dt() * (1.0 + 1e-12)));
    if (w.steps_per_window < 1) {
        const int n_min = int(std::ceil(lat.horizon() / w.lambda - 1e-12));
        throw config_error("window length " + std::to_string(w.lambda) + " is shorter than one lattice step " +
                           std::to_string(lat.dt()) + "; need N >= " + std::to_string(n_min));
    }
    w.windows = (lat.steps() + w.steps_per_window - 1) / w.steps_per_window;
    return w;
}

struct YCoupledOptions {
    double tol = 1e-9;
    int max_iter = 200;  // per window
    double inner_tol = 1e-12;
    int max_inner = 200;
    double slack = 0.05;
    double beta = 1.0;
    double C = 0.0;
    std::optional<std::vector<AdaptedProcess>> initial;
};

/// Value-coupled map with joint drivers g^i(t, y, z^i). On each window, from T
/// backwards, the frozen vector y is iterated to a fixed point (own coordinate
/// implicit, the others frozen) and the window solution becomes the terminal
/// data of the previous window.
inline SolveReport picard_y_coupled(const SystemSpec& spec, const YCoupledOptions& opt = {}) {
    detail::require_system(spec);
    const auto t0 = std::chrono::steady_clock::now();
    const Lattice& lat = spec.lattice;
    const int n = spec.n();
    const auto plan = plan_windows(lat, opt.beta, n);
    SolveReport r;
    r.map = "y_coupled";
    r.windows = plan.windows;
    r.window_steps = plan.steps_per_window;

    std::vector<SolutionPair> sol;
    std::vector<AdaptedProcess> frozen;
    for (int i = 0; i < n; ++i) {
        sol.push_back({AdaptedProcess(lat), ControlProcess(lat), 0.0, Scheme::implicit_euler});
        auto yN = sol[i].Y.at(lat.steps());
        std::copy(spec.components[i].terminal.begin(), spec.components[i].terminal.end(), yN.begin());
        frozen.push_back(opt.initial ? (*opt.initial)[i] : AdaptedProcess(lat));
    }

    bool all_converged = true;
    int k_hi = lat.steps();
    while (k_hi > 0) {
        const int k_lo = std::max(0, k_hi - plan.steps_per_window);
        for (int i = 0; i < n; ++i) {  // frozen iterate agrees with the pasted data at the window end
            auto dst = frozen[i].at(k_hi);
            const auto src = sol[i].Y.at(k_hi);
            std::copy(src.begin(), src.end(), dst.begin());
        }
        bool converged = false;
        int used = 0;
        for (int it = 1; it <= opt.max_iter; ++it) {
            used = it;
            double dist = 0.0;
            std::vector<SolutionPair> trial = sol;
            for (int i = 0; i < n; ++i) {
                const auto& c = spec.components[i];
                Driver1D drv;
                drv.depends_on_y = true;
                drv.f = [&c, &frozen, i, n](const NodeContext& ctx, double yown, std::span<const double> z) {
                    std::vector<double> y(static_cast<std::size_t>(n));
                    for (int j = 0; j < n; ++j) y[j] = j == i ? yown : frozen[j](ctx.step, ctx.node);
                    return c.g ? c.g(ctx, y, z) : 0.0;
                };
                backward_steps(lat, drv, Scheme::implicit_euler, k_hi, k_lo, trial[i], opt.inner_tol,
                               opt.max_inner);
            }
            for (int i = 0; i < n; ++i) {
                for (int k = k_lo; k < k_hi; ++k) {
                    const auto a = trial[i].Y.at(k), b = frozen[i].at(k);
                    for (std::size_t v = 0; v < a.size(); ++v) dist = std::max(dist, std::abs(a[v] - b[v]));
                }
            }
            for (int i = 0; i < n; ++i) {
                for (int k = k_lo; k < k_hi; ++k) {
                    const auto a = trial[i].Y.at(k);
                    auto b = frozen[i].at(k);
                    std::copy(a.begin(), a.end(), b.begin());
                }
            }
            sol = std::move(trial);
            r.distances.push_back(dist);
            r.y_distances.push_back(dist);
            if (dist <= opt.tol) {
                converged = true;
                break;
            }
            if (!std::isfinite(dist)) break;
        }
        r.window_iterations.push_back(used);
        r.iterations += used;
        all_converged = all_converged && converged;
        if (!converged) break;
        k_hi = k_lo;
    }
    r.converged = all_converged;
    for (auto& s : sol) {
        r.Y.push_back(std::move(s.Y));
        r.Z.push_back(std::move(s.Z));
    }

    std::vector<double> norms;
    for (const auto& c : spec.components) {
        double m = 0.0;
        for (double v : c.terminal) m = std::max(m, std::abs(v));
        norms.push_back(m);
    }
    const auto data = thm23_data(opt.C, opt.beta, 1.0, norms, lat.horizon(), n);
    double worst_ratio = 0.0, worst_value = 0.0, worst_bound = 0.0;
    for (int k = 0; k <= lat.steps(); ++k) {
        const double b = data.y_bound(lat.time(k));
        for (int i = 0; i < n; ++i) {
            for (double v : r.Y[i].at(k)) {
                const double ratio = b > 0.0 ? std::abs(v) / b : (v == 0.0 ? 0.0 : INFINITY);
                if (ratio >= worst_ratio) {
                    worst_ratio = ratio;
                    worst_value = std::abs(v);
                    worst_bound = b;
                }
            }
        }
    }
    r.membership.push_back(detail::membership("|Y_t| / exponential bound", worst_value, worst_bound, opt.slack));
    detail::finish_report(r, opt.tol);
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Geometric-mean ratio of successive distances over the last ceil(n/2)
/// iterations (at least two points).
inline double contraction_estimate(const SolveReport& report) {
    const auto& d = report.distances;
    if (d.size() < 3) throw insufficient_data("contraction_estimate needs at least 3 recorded iterations");
    const std::size_t h = std::max<std::size_t>(2, (d.size() + 1) / 2);
    const double first = d[d.size() - h], last = d.back();
    if (first == 0.0) return 0.0;
    return std::pow(last / first, 1.0 / double(h - 1));
}

struct ProbeVerdict {
    int restarts = 0;
    std::uint64_t seed = 0;
    bool base_converged = false;
    bool all_converged = false;
    double max_y_gap = 0.0;
    double max_z_gap = 0.0;
    double threshold = 0.0;
    std::vector<double> y_gaps;
    std::vector<double> z_gaps;
    bool passed = false;
};

enum class ProbeMap { z_coupled, full, y_coupled };

namespace detail {

inline ControlProcess random_control(const Lattice& lat, std::mt19937_64& rng, double radius) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ControlProcess z(lat);
    for (int k = 0; k < lat.steps(); ++k)
        for (double& v : z.at(k)) v = u(rng);
    const double norm = bmo_norm(z, 2.0);
    const double target = radius * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return norm > 0.0 ? scaled(z, target / norm) : z;
}

inline AdaptedProcess random_adapted(const Lattice& lat, std::mt19937_64& rng, double radius) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double scale = radius * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    AdaptedProcess y(lat);
    for (int k = 0; k <= lat.steps(); ++k)
        for (double& v : y.at(k)) v = scale * u(rng);
    return y;
}

}  // namespace detail

/// Reruns the fixed point from `restarts` random initial iterates inside the
/// candidate ball (deterministic from the seed) and compares every fixed point
/// with the base run in sup norm (Y) and BMO_2 (Z).
inline ProbeVerdict uniqueness_probe(const SystemSpec& spec, ProbeMap map, const PicardOptions& opt,
                                     int restarts, std::uint64_t seed, const YCoupledOptions& yopt = {}) {
    ProbeVerdict pv;
    pv.restarts = restarts;
    pv.seed = seed;
    auto run = [&](std::optional<Iterate> init) {
        if (map == ProbeMap::y_coupled) {
            YCoupledOptions o = yopt;
            if (init) o.initial = init->y;
            return picard_y_coupled(spec, o);
        }
        PicardOptions o = opt;
        o.initial = std::move(init);
        return map == ProbeMap::z_coupled ? picard_z_coupled(spec, o) : picard_full(spec, o);
    };
    const auto base = run(std::nullopt);
    pv.base_converged = base.converged;
    pv.all_converged = base.converged;
    const double tol = map == ProbeMap::y_coupled ? yopt.tol : opt.tol;
    pv.threshold = 10.0 * tol;

    std::mt19937_64 rng(seed);
    const int n = spec.n();
    auto bound = [&](const std::string& key, double fallback) {
        auto it = opt.bounds.find(key);
        return it != opt.bounds.end() && std::isfinite(it->second) ? it->second : fallback;
    };
    for (int r = 0; r < restarts; ++r) {
        Iterate init;
        for (int i = 0; i < n; ++i) {
            const double yr = map == ProbeMap::z_coupled ? 0.0 : bound("y_sup", 1.0) / std::sqrt(double(n));
            const double zr = map == ProbeMap::z_coupled ? bound("z_bmo_" + std::to_string(i + 1), 1.0)
                                                         : bound("z_bmo", 1.0) / std::sqrt(double(n));
            init.y.push_back(detail::random_adapted(spec.lattice, rng, yr));
            init.z.push_back(map == ProbeMap::y_coupled ? ControlProcess(spec.lattice)
                                                        : detail::random_control(spec.lattice, rng, zr));
        }
        const auto rep = run(std::move(init));
        pv.all_converged = pv.all_converged && rep.converged;
        double yg = 0.0, zg = 0.0;
        for (int i = 0; i < n; ++i) {
            yg = std::max(yg, sup_distance(rep.Y[i], base.Y[i]));
            zg = std::max(zg, bmo_norm(rep.Z[i] - base.Z[i], 2.0));
        }
        pv.y_gaps.push_back(yg);
        pv.z_gaps.push_back(zg);
        pv.max_y_gap = std::max(pv.max_y_gap, yg);
        pv.max_z_gap = std::max(pv.max_z_gap, zg);
    }
    pv.passed = pv.all_converged && pv.max_y_gap <= pv.threshold && pv.max_z_gap <= pv.threshold;
    return pv;
}

/// The two-dimensional cross-quadratic system
///   g^1 = theta1 |z^1|^2 + vartheta1 |z^2|^2,  g^2 = vartheta2 |z^1|^2 + theta2 |z^2|^2
/// in separated form f^i = theta_i |z^i|^2, h^i = vartheta_i |z^other|^2.
inline SystemSpec system2(const Lattice& lat, double theta1, double theta2, double vartheta1, double vartheta2,
                          std::vector<double> xi1, std::vector<double> xi2) {
    SystemSpec s{lat, {}};
    const int d = lat.dim();
    auto sq = [](std::span<const double> z) {
        double a = 0.0;
        for (double v : z) a += v * v;
        return a;
    };
    const std::array<double, 2> th{theta1, theta2}, vt{vartheta1, vartheta2};
    std::array<std::vector<double>, 2> xi{std::move(xi1), std::move(xi2)};
    for (int i = 0; i < 2; ++i) {
        SystemComponent c;
        c.terminal = std::move(xi[i]);
        const double a = th[i], b = vt[i];
        const int other = 1 - i;
        c.f = [a, sq](const NodeContext&, std::span<const double> z) { return a * sq(z); };
        c.h = [b, other, d, sq](const NodeContext&, std::span<const double>, std::span<const double> z) {
            return b * sq(z.subspan(std::size_t(other) * d, std::size_t(d)));
        };
        c.gamma = a;
        s.components.push_back(std::move(c));
    }
    return s;
}

}  // namespace qbsde
