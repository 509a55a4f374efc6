#pragma once

// BMO machinery constants: the function Phi governing reverse Hoelder
// inequalities, the norm-equivalence constants L_p, the reverse Hoelder
// constant C_p, John-Nierenberg bounds and the Girsanov equivalence constants
// (c1, c2).
//
// The Girsanov recipe chains Hoelder exponents whose distance to 1 can be far
// below double resolution (p - 1 ~ exp(-4e4) is typical once K >= 2), so the
// recipe runs on logarithms: p is carried as log(p - 1), q as log(q), and the
// final constants as log(c1), log(c2). Plain doubles are filled in as well and
// may underflow to 0 or overflow to inf.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "qbsde/error.hpp"

namespace qbsde {

namespace detail {

inline double phi_core(double log_ratio, double x) {
    // sqrt(1 + a) - 1 written as a / (sqrt(1 + a) + 1) to keep digits for small a
    const double a = log_ratio / (x * x);
    return a / (std::sqrt(1.0 + a) + 1.0);
}

// Phi(1 + e^l), valid for any finite l including excesses below double resolution.
inline double phi_from_log_excess(double log_excess) {
    const double u = std::exp(log_excess);
    double log_ratio;  // log((2x - 1) / (2(x - 1))) = log((1 + 2u) / (2u))
    if (u < 1e-8)
        log_ratio = std::log1p(2.0 * u) - std::numbers::ln2 - log_excess;
    else
        log_ratio = std::log1p(1.0 / (2.0 * u));
    return phi_core(log_ratio, 1.0 + u);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) {
    if (x > 30.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace detail

/// Phi(x) = sqrt(1 + x^-2 log((2x-1)/(2(x-1)))) - 1 for x > 1.
inline double phi(double x) {
    if (!(x > 1.0) || !std::isfinite(x))
        throw domain_error("phi needs x > 1, got " + std::to_string(x));
    return detail::phi_core(std::log1p(1.0 / (2.0 * (x - 1.0))), x);
}

/// log(x* - 1) where Phi(x*) = K. Phi is a decreasing bijection (1, inf) -> (0, inf).
inline double phi_inverse_log_excess(double K) {
    if (!(K > 0.0) || !(K < 1e150))
        throw domain_error("phi_inverse needs 0 < K < 1e150, got " + std::to_string(K));
    double hi = 0.0;
    while (detail::phi_from_log_excess(hi) > K) hi += std::max(1.0, hi);
    double lo = hi - 1.0;
    while (detail::phi_from_log_excess(lo) < K) lo -= std::max(1.0, std::abs(lo));
    for (int it = 0; it < 4000; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (hi - lo <= 1e-15 * std::max(1.0, std::abs(mid))) break;
        if (detail::phi_from_log_excess(mid) > K)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// x* with Phi(x*) = K. Any p in (1, x*) has Phi(p) > K. For large K the excess
/// x* - 1 is below double resolution and the result rounds to 1; use
/// phi_inverse_log_excess when that matters.
inline double phi_inverse(double K) { return 1.0 + std::exp(phi_inverse_log_excess(K)); }

/// log L_p given log p, usable for p far beyond double range.
inline double log_l_p_from_log(double log_p) {
    constexpr double ln8 = 3.0 * std::numbers::ln2;
    if (log_p < 700.0) {
        const double p = std::exp(log_p);
        if (!(p > 1.0)) throw domain_error("L_p needs p > 1, got " + std::to_string(p));
        return ln8 + std::numbers::ln2 / p + std::lgamma(p + 1.0) / p;
    }
    // Stirling: log Gamma(p+1) / p = log p - 1 + O(log p / p)
    return ln8 + log_p - 1.0;
}

inline double log_l_p(double p) {
    if (!(p > 1.0)) throw domain_error("L_p needs p > 1, got " + std::to_string(p));
    return log_l_p_from_log(std::log(p));
}

/// L_p = 8 * 2^(1/p) * Gamma(p+1)^(1/p); the factorial form for integer p.
inline double l_p(double p) { return std::exp(log_l_p(p)); }

/// n(M) = 2 ||M||_BMO1 + ||M||_BMO2^2.
inline double n_of(double bmo1, double bmo2) { return 2.0 * bmo1 + bmo2 * bmo2; }

/// Reverse Hoelder constant C_p = 2 / (1 - 2(p-1)/(2p-1) exp(p^2 n)).
inline double c_p(double p, double nM) {
    if (!(p > 1.0)) throw domain_error("C_p needs p > 1, got " + std::to_string(p));
    if (!(nM >= 0.0)) throw domain_error("C_p needs n(M) >= 0");
    const double denom = 1.0 - 2.0 * (p - 1.0) / (2.0 * p - 1.0) * std::exp(p * p * nM);
    if (!(denom > 0.0) || !std::isfinite(denom))
        throw infeasible_constant("C_p infeasible for p=" + std::to_string(p) +
                                  ", n(M)=" + std::to_string(nM));
    return 2.0 / denom;
}

/// log C_p with p = 1 + e^l.
inline double log_c_p_from_log_excess(double log_excess, double nM) {
    const double u = std::exp(log_excess);
    const double lt = std::numbers::ln2 + log_excess - std::log1p(2.0 * u) + (1.0 + u) * (1.0 + u) * nM;
    if (!(lt < 0.0))
        throw infeasible_constant("C_p infeasible: log of subtracted term is " + std::to_string(lt));
    return std::numbers::ln2 - std::log(-std::expm1(lt));
}

enum class JnVariant { bmo1, bmo2 };

/// John-Nierenberg bound on E[exp(.)|F_tau]: 1/(1-4||M||_BMO1) or 1/(1-||M||_BMO^2).
inline double jn_bound(double norm, JnVariant variant) {
    if (!(norm >= 0.0)) throw domain_error("jn_bound needs a non-negative norm");
    if (variant == JnVariant::bmo1) {
        if (!(norm < 0.25)) throw domain_error("jn_bound(bmo1) needs norm < 1/4");
        return 1.0 / (1.0 - 4.0 * norm);
    }
    if (!(norm < 1.0)) throw domain_error("jn_bound(bmo2) needs norm < 1");
    return 1.0 / (1.0 - norm * norm);
}

struct GirsanovConstants {
    double K = 0.0;
    double safety = 0.5;
    int retries = 0;  // halvings of p - 1 needed to make C_p feasible

    double log_p_minus_1 = 0.0;
    double p = 0.0, q = 0.0, log_q = 0.0;
    double C_p = 0.0, log_C_p = 0.0;
    double L_2q = 0.0, log_L_2q = 0.0;

    double K_bar = 0.0, log_K_bar = 0.0;
    double log_p_bar_minus_1 = 0.0;
    double p_bar = 0.0, q_bar = 0.0, log_q_bar = 0.0;
    double C_p_bar = 0.0, log_C_p_bar = 0.0;
    double L_2q_bar = 0.0, log_L_2q_bar = 0.0;

    double c1 = 0.0, log_c1 = 0.0;
    double c2 = 0.0, log_c2 = 0.0;
};

namespace detail {

struct HoelderChoice {
    double log_excess;
    double log_C;
    int retries;
};

// log of the subtracted term 2(p-1)/(2p-1) e^{p^2 n} in C_p, at p = 1 + s (x* - 1)
// where Phi(x*) = K and n = 2K + K^2. Since (K+1)^2 - 1 = n, Phi(x*) = K reads
// log((1+2u*)/(2u*)) = n (1+u*)^2, and the term reduces to a sum of small
// quantities. The direct form cancels two numbers of size n once n is large.
inline double log_subtracted_at_fraction(double log_u_star, double log_s, double nM) {
    const double u = std::exp(log_u_star);
    const double su = std::exp(log_u_star + log_s);
    const double ratio_m1 = std::expm1(2.0 * (std::log1p(su) - std::log1p(u)));
    return log_s + std::log1p(2.0 * u) - std::log1p(2.0 * su) + nM * (1.0 + u) * (1.0 + u) * ratio_m1;
}

inline HoelderChoice choose_exponent(double K, double safety) {
    const double log_u_star = phi_inverse_log_excess(K);
    const double nM = n_of(K, K);
    double log_s = std::log(safety);
    for (int r = 0; r <= 60; ++r) {
        const double lt = log_subtracted_at_fraction(log_u_star, log_s, nM);
        if (lt < 0.0) return {log_u_star + log_s, std::numbers::ln2 - std::log(-std::expm1(lt)), r};
        log_s -= std::numbers::ln2;
    }
    throw infeasible_constant("no feasible reverse Hoelder exponent for K=" + std::to_string(K));
}

inline double log_from_excess(double le) {  // log(1 + e^le)
    return softplus(le);
}

}  // namespace detail

/// Constants (c1, c2) with c1 ||M||^2 <= ||M~||^2_{BMO(P~)} <= c2 ||M||^2 for
/// every change of measure driven by a BMO martingale of norm at most K.
///
/// p is placed a `safety` fraction of the way from 1 to Phi^{-1}(K); C_p uses
/// the worst-case n(M) = 2K + K^2. K_bar = sqrt(2(q-1) log(C_p + 1)) then
/// fixes p_bar the same way.
inline GirsanovConstants girsanov_constants(double K, double safety = 0.5) {
    if (!(K > 0.0)) throw domain_error("girsanov_constants needs K > 0");
    if (!(safety > 0.0 && safety < 1.0)) throw domain_error("safety fraction must be in (0,1)");
    GirsanovConstants g;
    g.K = K;
    g.safety = safety;

    const auto first = detail::choose_exponent(K, safety);
    g.retries = first.retries;
    g.log_p_minus_1 = first.log_excess;
    g.p = 1.0 + std::exp(first.log_excess);
    g.log_q = detail::softplus(-first.log_excess);  // q = 1 + 1/(p-1)
    g.q = std::exp(g.log_q);
    g.log_C_p = first.log_C;
    g.C_p = std::exp(first.log_C);
    g.log_L_2q = log_l_p_from_log(std::numbers::ln2 + g.log_q);
    g.L_2q = std::exp(g.log_L_2q);

    // log K_bar = (log 2 + log(q-1) + log log(C_p + 1)) / 2, log(q-1) = -log(p-1)
    g.log_K_bar = 0.5 * (std::numbers::ln2 - first.log_excess + std::log(detail::softplus(first.log_C)));
    g.K_bar = std::exp(g.log_K_bar);
    if (!(g.K_bar < 1e150))
        throw infeasible_constant("K_bar exceeds the representable range for K=" + std::to_string(K));

    const auto second = detail::choose_exponent(g.K_bar, safety);
    g.retries += second.retries;
    g.log_p_bar_minus_1 = second.log_excess;
    g.p_bar = 1.0 + std::exp(second.log_excess);
    g.log_q_bar = detail::softplus(-second.log_excess);
    g.q_bar = std::exp(g.log_q_bar);
    g.log_C_p_bar = second.log_C;
    g.C_p_bar = std::exp(second.log_C);
    g.log_L_2q_bar = log_l_p_from_log(std::numbers::ln2 + g.log_q_bar);
    g.L_2q_bar = std::exp(g.log_L_2q_bar);

    const double p_bar_recip = std::exp(-detail::log_from_excess(second.log_excess));
    const double p_recip = std::exp(-detail::log_from_excess(first.log_excess));
    g.log_c1 = -4.0 * g.log_L_2q_bar - 2.0 * p_bar_recip * g.log_C_p_bar;
    g.log_c2 = 4.0 * g.log_L_2q + 2.0 * p_recip * g.log_C_p;
    g.c1 = std::exp(g.log_c1);
    g.c2 = std::exp(g.log_c2);
    return g;
}

}  // namespace qbsde
