#pragma once

// Independent reference computations for the tests: 50-digit evaluations of
// the closed-form constants, and brute-force path enumeration on the
// non-recombining tree (no conditional-expectation recursion involved).

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <vector>

#include "qbsde/lattice.hpp"

namespace oracle {

using hp = boost::multiprecision::cpp_bin_float_50;

inline hp phi(const hp& x) {
    using boost::multiprecision::log;
    using boost::multiprecision::sqrt;
    return sqrt(1 + log((2 * x - 1) / (2 * (x - 1))) / (x * x)) - 1;
}

inline hp l_p(const hp& p) {
    using boost::multiprecision::pow;
    return 8 * pow(hp(2), 1 / p) * pow(boost::math::tgamma(p + 1), 1 / p);
}

inline hp c_p(const hp& p, const hp& nM) {
    using boost::multiprecision::exp;
    return 2 / (1 - 2 * (p - 1) / (2 * p - 1) * exp(p * p * nM));
}

/// Bisection for Phi(x) = K on (1, hi]; Phi is decreasing.
inline hp phi_inverse(const hp& K) {
    hp lo = 1 + hp("1e-40"), hi = 1e6;
    for (int i = 0; i < 400; ++i) {
        const hp mid = (lo + hi) / 2;
        (phi(mid) > K ? lo : hi) = mid;
    }
    return lo;
}

struct Girsanov {
    hp p, C_p, K_bar, p_bar, C_p_bar, c1, c2;
};

/// The two-stage Hoelder recipe evaluated directly in 50 digits (no retries).
inline Girsanov girsanov(const hp& K, const hp& safety) {
    using boost::multiprecision::log;
    using boost::multiprecision::pow;
    using boost::multiprecision::sqrt;
    Girsanov g;
    g.p = 1 + safety * (phi_inverse(K) - 1);
    const hp q = g.p / (g.p - 1);
    g.C_p = c_p(g.p, 2 * K + K * K);
    g.K_bar = sqrt(2 * (q - 1) * log(g.C_p + 1));
    g.p_bar = 1 + safety * (phi_inverse(g.K_bar) - 1);
    const hp q_bar = g.p_bar / (g.p_bar - 1);
    g.C_p_bar = c_p(g.p_bar, 2 * g.K_bar + g.K_bar * g.K_bar);
    g.c1 = 1 / (pow(l_p(2 * q_bar), 4) * pow(g.C_p_bar, 2 / g.p_bar));
    g.c2 = pow(l_p(2 * q), 4) * pow(g.C_p, 2 / g.p);
    return g;
}

inline double to_double(const hp& v) { return v.convert_to<double>(); }

/// Node index of every step along one path of a d = 1 lattice; bit k of `bits`
/// is the sign pattern taken at step k (set = down move).
inline std::vector<std::size_t> path_nodes(const qbsde::Lattice& lat, unsigned long bits) {
    std::vector<std::size_t> nodes{0};
    for (int k = 0; k < lat.steps(); ++k) nodes.push_back(lat.child(k, nodes.back(), int((bits >> k) & 1u)));
    return nodes;
}

/// E[(sum_{j>=k} |Z_j|^2 dt)^{p/2} | v]^{1/p} at every node by enumerating all
/// 2^N paths (d = 1 tree); returns the node maximum.
inline double bmo_by_paths(const qbsde::ControlProcess& z, double p) {
    const auto& lat = z.lattice();
    const int N = lat.steps();
    std::vector<std::vector<double>> acc(static_cast<std::size_t>(N)), cnt(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
        acc[k].assign(lat.nodes_at(k), 0.0);
        cnt[k].assign(lat.nodes_at(k), 0.0);
    }
    for (unsigned long bits = 0; bits < (1ul << N); ++bits) {
        const auto nodes = path_nodes(lat, bits);
        double tail = 0.0;
        for (int k = N - 1; k >= 0; --k) {
            tail += z.squared_norm(k, nodes[k]) * lat.dt();
            acc[k][nodes[k]] += std::pow(tail, p / 2.0);
            cnt[k][nodes[k]] += 1.0;
        }
    }
    double best = 0.0;
    for (int k = 0; k < N; ++k)
        for (std::size_t v = 0; v < acc[k].size(); ++v)
            best = std::max(best, std::pow(acc[k][v] / cnt[k][v], 1.0 / p));
    return best;
}

/// E[exp(M_T - M_v) | v] for M = Z.W at every non-terminal node, by path
/// enumeration (d = 1 tree).
inline std::vector<std::vector<double>> exp_moment_by_paths(const qbsde::ControlProcess& z) {
    const auto& lat = z.lattice();
    const int N = lat.steps();
    std::vector<std::vector<double>> acc(static_cast<std::size_t>(N)), cnt(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
        acc[k].assign(lat.nodes_at(k), 0.0);
        cnt[k].assign(lat.nodes_at(k), 0.0);
    }
    for (unsigned long bits = 0; bits < (1ul << N); ++bits) {
        const auto nodes = path_nodes(lat, bits);
        double tail = 0.0;
        for (int k = N - 1; k >= 0; --k) {
            const double eps = lat.increment(int((bits >> k) & 1u), 0);
            tail += z.row(k, nodes[k])[0] * eps;
            acc[k][nodes[k]] += std::exp(tail);
            cnt[k][nodes[k]] += 1.0;
        }
    }
    for (int k = 0; k < N; ++k)
        for (std::size_t v = 0; v < acc[k].size(); ++v) acc[k][v] /= cnt[k][v];
    return acc;
}

}  // namespace oracle
