#pragma once

// Exact discrete Brownian filtration: a d-dimensional Rademacher walk whose
// increments are +-sqrt(dt) per coordinate, every sign pattern equally likely.
//
// Two node layouts are supported:
//   tree         node = branch word over 2^d symbols (path dependent, budgeted)
//   recombining  node = vector of down-move counts per coordinate (Markov in W)
// Conditional expectations agree on both layouts for functionals of W_t.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qbsde/error.hpp"

namespace qbsde {

enum class Topology { tree, recombining };

inline constexpr double default_node_budget = 16777216.0;  // 2^24 terminal nodes

inline const char* to_string(Topology t) {
    return t == Topology::tree ? "tree" : "recombining";
}

class Lattice {
public:
    Lattice() = default;

    Lattice(double horizon, int steps, int dim, Topology topology = Topology::tree,
            double node_budget = default_node_budget)
        : horizon_(horizon), steps_(steps), dim_(dim), topology_(topology) {
        if (!(horizon > 0.0) || !std::isfinite(horizon))
            throw invalid_parameter("lattice horizon T must be positive, got " + std::to_string(horizon));
        if (steps < 1)
            throw invalid_parameter("lattice steps N must be >= 1, got " + std::to_string(steps));
        if (dim < 1 || dim > 3)
            throw invalid_parameter("lattice dimension d must be in [1,3], got " + std::to_string(dim));
        branching_ = 1 << dim;
        dt_ = horizon / steps;
        sqrt_dt_ = std::sqrt(dt_);

        const double terminal = topology == Topology::tree
                                    ? std::pow(2.0, double(dim) * steps)
                                    : std::pow(double(steps + 1), double(dim));
        if (terminal > node_budget) {
            throw budget_exceeded("lattice needs " + format_count(terminal) +
                                      " terminal nodes, budget is " + format_count(node_budget),
                                  terminal);
        }
    }

    double horizon() const noexcept { return horizon_; }
    int steps() const noexcept { return steps_; }
    int dim() const noexcept { return dim_; }
    int branching() const noexcept { return branching_; }
    double dt() const noexcept { return dt_; }
    double sqrt_dt() const noexcept { return sqrt_dt_; }
    Topology topology() const noexcept { return topology_; }
    double time(int k) const noexcept { return k * dt_; }

    std::size_t nodes_at(int k) const noexcept {
        if (topology_ == Topology::tree) return std::size_t{1} << (dim_ * k);
        std::size_t n = 1;
        for (int j = 0; j < dim_; ++j) n *= std::size_t(k + 1);
        return n;
    }

    std::size_t total_nodes() const noexcept {
        std::size_t s = 0;
        for (int k = 0; k <= steps_; ++k) s += nodes_at(k);
        return s;
    }

    /// Child of `node` (at step k) reached by sign pattern `s`; bit j of s set
    /// means coordinate j moves down.
    std::size_t child(int k, std::size_t node, int s) const noexcept {
        if (topology_ == Topology::tree) return node * branching_ + std::size_t(s);
        std::size_t idx = 0, stride = 1, rest = node;
        const std::size_t base = std::size_t(k + 1);
        for (int j = 0; j < dim_; ++j) {
            const std::size_t c = rest % base + ((s >> j) & 1);
            rest /= base;
            idx += c * stride;
            stride *= base + 1;
        }
        return idx;
    }

    double increment(int s, int j) const noexcept {
        return ((s >> j) & 1) ? -sqrt_dt_ : sqrt_dt_;
    }

    /// Coordinate j of the walk W at a node.
    double walk(int k, std::size_t node, int j) const noexcept {
        if (topology_ == Topology::recombining) {
            std::size_t rest = node;
            for (int m = 0; m < j; ++m) rest /= std::size_t(k + 1);
            const auto down = double(rest % std::size_t(k + 1));
            return (double(k) - 2.0 * down) * sqrt_dt_;
        }
        int down = 0;
        std::size_t rest = node;
        for (int m = 0; m < k; ++m) {
            const int s = int(rest % std::size_t(branching_));
            rest /= std::size_t(branching_);
            down += (s >> j) & 1;
        }
        return (double(k) - 2.0 * down) * sqrt_dt_;
    }

    /// Probability of reaching a node at step k.
    double node_probability(int k, std::size_t node) const {
        if (topology_ == Topology::tree) return std::pow(double(branching_), -double(k));
        double p = 1.0;
        std::size_t rest = node;
        for (int j = 0; j < dim_; ++j) {
            const int down = int(rest % std::size_t(k + 1));
            rest /= std::size_t(k + 1);
            p *= std::exp(std::lgamma(k + 1.0) - std::lgamma(down + 1.0) -
                          std::lgamma(k - down + 1.0) - k * std::log(2.0));
        }
        return p;
    }

    bool same_shape(const Lattice& o) const noexcept {
        return horizon_ == o.horizon_ && steps_ == o.steps_ && dim_ == o.dim_ &&
               topology_ == o.topology_;
    }

private:
    static std::string format_count(double v) {
        if (v < 1e15) return std::to_string(static_cast<long long>(v));
        return std::to_string(v);
    }

    double horizon_ = 1.0;
    int steps_ = 1;
    int dim_ = 1;
    int branching_ = 2;
    double dt_ = 1.0;
    double sqrt_dt_ = 1.0;
    Topology topology_ = Topology::tree;
};

inline Lattice build_lattice(double horizon, int steps, int dim, Topology topology = Topology::tree,
                             double node_budget = default_node_budget) {
    return Lattice(horizon, steps, dim, topology, node_budget);
}

/// Node-indexed values on steps 0..N (Y-type processes).
class AdaptedProcess {
public:
    AdaptedProcess() = default;
    explicit AdaptedProcess(const Lattice& lat, double fill = 0.0) : lattice_(lat) {
        values_.resize(std::size_t(lat.steps()) + 1);
        for (int k = 0; k <= lat.steps(); ++k) values_[k].assign(lat.nodes_at(k), fill);
    }

    const Lattice& lattice() const noexcept { return lattice_; }
    std::span<double> at(int k) { return values_.at(std::size_t(k)); }
    std::span<const double> at(int k) const { return values_.at(std::size_t(k)); }
    double& operator()(int k, std::size_t node) { return values_[k][node]; }
    double operator()(int k, std::size_t node) const { return values_[k][node]; }

    friend bool operator==(const AdaptedProcess& a, const AdaptedProcess& b) {
        return a.lattice_.same_shape(b.lattice_) && a.values_ == b.values_;
    }

private:
    Lattice lattice_;
    std::vector<std::vector<double>> values_;
};

/// Node-indexed rows of `width` reals on steps 0..N-1 (Z-type processes).
/// For a single component width == d; stacked systems use width == n*d.
class ControlProcess {
public:
    ControlProcess() = default;
    ControlProcess(const Lattice& lat, int width, double fill = 0.0)
        : lattice_(lat), width_(width) {
        if (width < 1) throw invalid_parameter("control process width must be >= 1");
        values_.resize(std::size_t(lat.steps()));
        for (int k = 0; k < lat.steps(); ++k)
            values_[k].assign(lat.nodes_at(k) * std::size_t(width), fill);
    }
    explicit ControlProcess(const Lattice& lat) : ControlProcess(lat, lat.dim()) {}

    const Lattice& lattice() const noexcept { return lattice_; }
    int width() const noexcept { return width_; }
    std::span<double> at(int k) { return values_.at(std::size_t(k)); }
    std::span<const double> at(int k) const { return values_.at(std::size_t(k)); }
    std::span<double> row(int k, std::size_t node) {
        return std::span<double>(values_[k]).subspan(node * width_, std::size_t(width_));
    }
    std::span<const double> row(int k, std::size_t node) const {
        return std::span<const double>(values_[k]).subspan(node * width_, std::size_t(width_));
    }
    double squared_norm(int k, std::size_t node) const {
        double s = 0.0;
        for (double v : row(k, node)) s += v * v;
        return s;
    }

    friend bool operator==(const ControlProcess& a, const ControlProcess& b) {
        return a.lattice_.same_shape(b.lattice_) && a.width_ == b.width_ && a.values_ == b.values_;
    }

private:
    Lattice lattice_;
    int width_ = 1;
    std::vector<std::vector<double>> values_;
};

namespace detail {

inline void require_step(const Lattice& lat, int k, std::size_t size, const char* what) {
    if (k < 0 || k >= lat.steps())
        throw step_mismatch(std::string(what) + ": step " + std::to_string(k) + " out of range");
    if (size != lat.nodes_at(k + 1))
        throw step_mismatch(std::string(what) + ": expected " + std::to_string(lat.nodes_at(k + 1)) +
                            " values at step " + std::to_string(k + 1) + ", got " +
                            std::to_string(size));
}

inline void require_same(const Lattice& a, const Lattice& b, const char* what) {
    if (!a.same_shape(b)) throw step_mismatch(std::string(what) + ": lattice mismatch");
}

}  // namespace detail

/// E[X | F_k] for X given on step k+1: arithmetic mean over the 2^d children.
inline std::vector<double> conditional_expectation(const Lattice& lat, int k,
                                                   std::span<const double> next) {
    detail::require_step(lat, k, next.size(), "conditional_expectation");
    const std::size_t n = lat.nodes_at(k);
    const int b = lat.branching();
    std::vector<double> out(n);
    for (std::size_t v = 0; v < n; ++v) {
        double s = 0.0;
        for (int c = 0; c < b; ++c) s += next[lat.child(k, v, c)];
        out[v] = s / b;
    }
    return out;
}

struct Representation {
    std::vector<double> mean;             // per step-k node
    std::vector<double> z;                // nodes_at(k) * d, row-major
    std::vector<double> residual_energy;  // E[(X - mean - Z.eps)^2 | node]

    double max_residual_energy() const {
        double m = 0.0;
        for (double r : residual_energy) m = std::max(m, r);
        return m;
    }
};

/// Martingale representation over one step: X = mean + Z.eps + residual, where
/// Z_j = E[X eps_j | node] / dt. For d = 1 the residual vanishes identically.
inline Representation represent_martingale(const Lattice& lat, int k, std::span<const double> next) {
    detail::require_step(lat, k, next.size(), "represent_martingale");
    const std::size_t n = lat.nodes_at(k);
    const int b = lat.branching(), d = lat.dim();
    const double dt = lat.dt();
    Representation r;
    r.mean.resize(n);
    r.z.assign(n * std::size_t(d), 0.0);
    r.residual_energy.assign(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) {
        double m = 0.0;
        for (int c = 0; c < b; ++c) m += next[lat.child(k, v, c)];
        m /= b;
        r.mean[v] = m;
        double* zrow = r.z.data() + v * std::size_t(d);
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int c = 0; c < b; ++c) s += next[lat.child(k, v, c)] * lat.increment(c, j);
            zrow[j] = s / b / dt;
        }
        if (d > 1) {
            double e = 0.0;
            for (int c = 0; c < b; ++c) {
                double res = next[lat.child(k, v, c)] - m;
                for (int j = 0; j < d; ++j) res -= zrow[j] * lat.increment(c, j);
                e += res * res;
            }
            r.residual_energy[v] = e / b;
        }
    }
    return r;
}

/// M_0 = 0, M_{k+1} = M_k + Z_k . eps_{k+1}. Path dependent, so tree only.
inline AdaptedProcess stochastic_integral(const ControlProcess& z) {
    const Lattice& lat = z.lattice();
    if (lat.topology() != Topology::tree)
        throw invalid_parameter("stochastic_integral needs the tree topology");
    if (z.width() != lat.dim())
        throw invalid_parameter("stochastic_integral: control width must equal d");
    AdaptedProcess m(lat);
    for (int k = 0; k < lat.steps(); ++k) {
        const auto cur = m.at(k);
        auto nxt = m.at(k + 1);
        for (std::size_t v = 0; v < cur.size(); ++v) {
            const auto row = z.row(k, v);
            for (int c = 0; c < lat.branching(); ++c) {
                double inc = 0.0;
                for (int j = 0; j < lat.dim(); ++j) inc += row[j] * lat.increment(c, j);
                nxt[lat.child(k, v, c)] = cur[v] + inc;
            }
        }
    }
    return m;
}

namespace detail {

inline bool is_integral_half(double p, int& m) {
    const double h = p / 2.0;
    if (h >= 1.0 && h <= 32.0 && std::floor(h) == h) {
        m = int(h);
        return true;
    }
    return false;
}

// E[S_v^m | v] for the remaining quadratic variation S_v = sum_{k>=step(v)} |Z_k|^2 dt,
// by binomial moment recursion. Exact on either topology.
inline std::vector<std::vector<double>> remaining_qv_moment(const ControlProcess& z, int m) {
    const Lattice& lat = z.lattice();
    const int N = lat.steps(), b = lat.branching();
    std::vector<double> binom(static_cast<std::size_t>(m) + 1);
    // moments[j] for nodes at the current step, j = 0..m
    std::vector<std::vector<double>> next(static_cast<std::size_t>(m) + 1, std::vector<double>(lat.nodes_at(N), 0.0));
    std::fill(next[0].begin(), next[0].end(), 1.0);
    std::vector<std::vector<double>> result(static_cast<std::size_t>(N));
    for (int k = N - 1; k >= 0; --k) {
        const std::size_t n = lat.nodes_at(k);
        std::vector<std::vector<double>> cur(static_cast<std::size_t>(m) + 1, std::vector<double>(n, 0.0));
        std::vector<double> child_mean(static_cast<std::size_t>(m) + 1);
        for (std::size_t v = 0; v < n; ++v) {
            for (int r = 0; r <= m; ++r) {
                double s = 0.0;
                for (int c = 0; c < b; ++c) s += next[r][lat.child(k, v, c)];
                child_mean[r] = s / b;
            }
            const double a = z.squared_norm(k, v) * lat.dt();
            for (int j = 0; j <= m; ++j) {
                // sum_r C(j,r) a^{j-r} E[S'^r]
                double acc = 0.0, coeff = 1.0;
                for (int r = j; r >= 0; --r) {
                    acc += coeff * child_mean[r];
                    coeff *= a * double(r) / double(j - r + 1);
                }
                cur[j][v] = acc;
            }
        }
        result[k] = cur[m];
        next = std::move(cur);
    }
    return result;
}

// E[S_v^{p/2} | v] by enumerating every leaf below v. Tree only; any p.
inline std::vector<std::vector<double>> remaining_qv_power_paths(const ControlProcess& z, double p) {
    const Lattice& lat = z.lattice();
    const int N = lat.steps();
    const std::size_t b = std::size_t(lat.branching());
    // prefix[k][v] = accumulated QV before step k, at node v of step k
    std::vector<std::vector<double>> prefix(static_cast<std::size_t>(N) + 1);
    prefix[0] = {0.0};
    for (int k = 0; k < N; ++k) {
        prefix[k + 1].assign(lat.nodes_at(k + 1), 0.0);
        for (std::size_t v = 0; v < lat.nodes_at(k); ++v) {
            const double q = prefix[k][v] + z.squared_norm(k, v) * lat.dt();
            for (std::size_t c = 0; c < b; ++c) prefix[k + 1][v * b + c] = q;
        }
    }
    const auto& total = prefix[N];
    const double e = p / 2.0;
    std::vector<std::vector<double>> result(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
        const std::size_t n = lat.nodes_at(k);
        const std::size_t below = total.size() / n;
        result[k].assign(n, 0.0);
        for (std::size_t v = 0; v < n; ++v) {
            double acc = 0.0;
            for (std::size_t l = v * below; l < (v + 1) * below; ++l)
                acc += std::pow(std::max(0.0, total[l] - prefix[k][v]), e);
            result[k][v] = acc / double(below);
        }
    }
    return result;
}

inline void require_bmo_order(double p) {
    if (!(p >= 1.0) || !std::isfinite(p))
        throw invalid_parameter("BMO order p must be a finite real >= 1, got " + std::to_string(p));
}

}  // namespace detail

enum class BmoRoute { automatic, moments, paths };

/// Per-node conditional BMO_p values (E[S_v^{p/2} | v])^{1/p} on steps 0..N-1.
inline std::vector<std::vector<double>> bmo_profile(const ControlProcess& z, double p,
                                                    BmoRoute route = BmoRoute::automatic) {
    detail::require_bmo_order(p);
    const Lattice& lat = z.lattice();
    int m = 0;
    const bool integral = detail::is_integral_half(p, m);
    if (route == BmoRoute::automatic) route = integral ? BmoRoute::moments : BmoRoute::paths;
    std::vector<std::vector<double>> moments;
    if (route == BmoRoute::moments) {
        if (!integral) throw invalid_parameter("moment route needs p/2 to be a positive integer");
        moments = detail::remaining_qv_moment(z, m);
    } else {
        if (lat.topology() != Topology::tree)
            throw invalid_parameter("BMO_p with p/2 non-integer needs the tree topology");
        moments = detail::remaining_qv_power_paths(z, p);
    }
    for (auto& step : moments)
        for (double& v : step) v = std::pow(std::max(0.0, v), 1.0 / p);
    return moments;
}

/// Lattice BMO_p norm: maximum over all nodes of the conditional p-th moment of
/// the remaining quadratic variation. On a finite tree the supremum over
/// stopping times is attained at a node, so the node maximum is exact.
inline double bmo_norm(const ControlProcess& z, double p, BmoRoute route = BmoRoute::automatic) {
    double best = 0.0;
    for (const auto& step : bmo_profile(z, p, route))
        for (double v : step) best = std::max(best, v);
    return best;
}

inline double sup_norm(const AdaptedProcess& y) {
    double best = 0.0;
    for (int k = 0; k <= y.lattice().steps(); ++k)
        for (double v : y.at(k)) best = std::max(best, std::abs(v));
    return best;
}

/// E[exp(M_T - M_v) | v] for M = Z.W, at every node (terminal value 1).
inline AdaptedProcess conditional_exponential_moment(const ControlProcess& z) {
    const Lattice& lat = z.lattice();
    AdaptedProcess out(lat, 1.0);
    for (int k = lat.steps() - 1; k >= 0; --k) {
        const auto nxt = out.at(k + 1);
        auto cur = out.at(k);
        for (std::size_t v = 0; v < cur.size(); ++v) {
            const auto row = z.row(k, v);
            double s = 0.0;
            for (int c = 0; c < lat.branching(); ++c) {
                double inc = 0.0;
                for (int j = 0; j < lat.dim(); ++j) inc += row[j] * lat.increment(c, j);
                s += std::exp(inc) * nxt[lat.child(k, v, c)];
            }
            cur[v] = s / lat.branching();
        }
    }
    return out;
}

/// Coordinate j of the walk as an adapted process.
inline AdaptedProcess walk_process(const Lattice& lat, int j) {
    AdaptedProcess w(lat);
    for (int k = 0; k <= lat.steps(); ++k) {
        auto vals = w.at(k);
        for (std::size_t v = 0; v < vals.size(); ++v) vals[v] = lat.walk(k, v, j);
    }
    return w;
}

inline ControlProcess operator-(const ControlProcess& a, const ControlProcess& b) {
    detail::require_same(a.lattice(), b.lattice(), "control difference");
    if (a.width() != b.width()) throw step_mismatch("control difference: width mismatch");
    ControlProcess out = a;
    for (int k = 0; k < a.lattice().steps(); ++k) {
        auto o = out.at(k);
        const auto bb = b.at(k);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bb[i];
    }
    return out;
}

inline ControlProcess scaled(const ControlProcess& a, double c) {
    ControlProcess out = a;
    for (int k = 0; k < a.lattice().steps(); ++k)
        for (double& v : out.at(k)) v *= c;
    return out;
}

/// Side-by-side stacking of several control processes (rows concatenated).
inline ControlProcess hstack(std::span<const ControlProcess> parts) {
    if (parts.empty()) throw invalid_parameter("hstack of nothing");
    const Lattice& lat = parts.front().lattice();
    int width = 0;
    for (const auto& p : parts) {
        detail::require_same(lat, p.lattice(), "hstack");
        width += p.width();
    }
    ControlProcess out(lat, width);
    for (int k = 0; k < lat.steps(); ++k) {
        for (std::size_t v = 0; v < lat.nodes_at(k); ++v) {
            auto row = out.row(k, v);
            std::size_t off = 0;
            for (const auto& p : parts) {
                const auto src = p.row(k, v);
                std::copy(src.begin(), src.end(), row.begin() + off);
                off += src.size();
            }
        }
    }
    return out;
}

inline double sup_distance(const AdaptedProcess& a, const AdaptedProcess& b) {
    detail::require_same(a.lattice(), b.lattice(), "sup_distance");
    double best = 0.0;
    for (int k = 0; k <= a.lattice().steps(); ++k) {
        const auto x = a.at(k), y = b.at(k);
        for (std::size_t i = 0; i < x.size(); ++i) best = std::max(best, std::abs(x[i] - y[i]));
    }
    return best;
}

}  // namespace qbsde
