#pragma once

// Solvability hypotheses for coupled quadratic systems. Each checker evaluates
// the inequalities exactly as stated (strict and non-strict comparisons are kept
// apart) and records every intermediate constant in the verdict.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qbsde/constants.hpp"
#include "qbsde/error.hpp"

namespace qbsde {

enum class Relation { le, lt };

struct InequalityRecord {
    std::string name;
    Relation relation = Relation::le;
    double left = 0.0;
    double right = 0.0;
    double margin = 0.0;  // right - left
    bool satisfied = false;
    // Set when the comparison was made between logarithms because the raw
    // sides leave double range; left/right then hold exp of the logs.
    bool log_scale = false;
    double log_left = 0.0;
    double log_right = 0.0;
};

enum class VerdictStatus { satisfied, unsatisfied, not_verifiable };

inline const char* to_string(VerdictStatus s) {
    switch (s) {
        case VerdictStatus::satisfied: return "satisfied";
        case VerdictStatus::unsatisfied: return "unsatisfied";
        default: return "not_verifiable";
    }
}

struct ConditionVerdict {
    std::string theorem;
    VerdictStatus status = VerdictStatus::unsatisfied;
    bool satisfied = false;
    std::string reason;
    std::vector<InequalityRecord> records;
    std::vector<InequalityRecord> informational;  // side-by-side variants, not part of the verdict
    std::map<std::string, double> constants;
    std::map<std::string, double> bounds;  // predicted a-priori bounds
    double safety = 0.0;                   // Hoelder safety fraction, when constants were needed
    std::optional<GirsanovConstants> girsanov;
    std::optional<GirsanovConstants> girsanov_bar;

    double min_margin() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& r : records) m = std::min(m, r.margin);
        return m;
    }
};

struct CoeffSet {
    std::array<double, 2> theta{0.0, 0.0};
    std::array<double, 2> vartheta{0.0, 0.0};
    std::array<double, 2> gamma{0.0, 0.0};
    std::array<double, 2> eta{0.0, 0.0};
    std::array<double, 2> alpha{0.0, 0.0};
    std::array<double, 2> beta{0.0, 0.0};
    double C = 0.0;
    double T = 1.0;
    std::array<double, 2> xi_norm{0.0, 0.0};
    double delta = 0.5;
    double safety = 0.5;
    bool unsquared_variant = false;
};

namespace detail {

inline InequalityRecord compare(std::string name, double left, double right, Relation rel) {
    InequalityRecord r;
    r.name = std::move(name);
    r.relation = rel;
    r.left = left;
    r.right = right;
    r.margin = right - left;
    r.satisfied = rel == Relation::le ? (left <= right) : (left < right);
    return r;
}

inline InequalityRecord compare_log(std::string name, double log_left, double log_right, Relation rel) {
    InequalityRecord r;
    r.name = std::move(name);
    r.relation = rel;
    r.log_scale = true;
    r.log_left = log_left;
    r.log_right = log_right;
    r.left = std::exp(log_left);
    r.right = std::exp(log_right);
    r.margin = r.right - r.left;
    r.satisfied = rel == Relation::le ? (log_left <= log_right) : (log_left < log_right);
    return r;
}

inline double log_abs(double x) { return std::log(std::abs(x)); }

inline double log_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline void finish(ConditionVerdict& v) {
    bool all = true;
    for (const auto& r : v.records) all = all && r.satisfied;
    if (v.status != VerdictStatus::not_verifiable)
        v.status = all ? VerdictStatus::satisfied : VerdictStatus::unsatisfied;
    v.satisfied = v.status == VerdictStatus::satisfied;
}

inline void require_positive(double v, const char* name) {
    if (!(v > 0.0)) throw domain_error(std::string(name) + " must be > 0");
}

}  // namespace detail

/// Purely cross-quadratic coupling (theta = 0): small terminal data relative to
/// the coupling coefficients.
inline ConditionVerdict check_thm21(double vartheta1, double vartheta2, double xi1, double xi2) {
    if (vartheta1 == 0.0 || vartheta2 == 0.0)
        throw domain_error("check_thm21 needs vartheta1 != 0 and vartheta2 != 0");
    ConditionVerdict v;
    v.theorem = "thm21";
    const double a1 = std::abs(vartheta1), a2 = std::abs(vartheta2);
    v.records.push_back(detail::compare("(i) 8|vartheta2| |xi1|^2 <= |xi2|", 8.0 * a2 * xi1 * xi1, xi2, Relation::le));
    v.records.push_back(detail::compare("(i) 8|vartheta1| |xi2|^2 <= |xi1|", 8.0 * a1 * xi2 * xi2, xi1, Relation::le));
    v.records.push_back(detail::compare("(ii) 16|vartheta1| |xi2| <= 1", 16.0 * a1 * xi2, 1.0, Relation::le));
    v.records.push_back(detail::compare("(ii) 16|vartheta2| |xi1| <= 1", 16.0 * a2 * xi1, 1.0, Relation::le));
    v.constants["contraction_bound_1"] = std::sqrt(128.0) * a1 * xi2;
    v.constants["contraction_bound_2"] = std::sqrt(128.0) * a2 * xi1;
    v.bounds["z_bmo_1"] = 2.0 * xi1;
    v.bounds["z_bmo_2"] = 2.0 * xi2;
    detail::finish(v);
    return v;
}

/// Self-quadratic plus cross-quadratic coupling (theta_i > 0). Condition (ii)
/// runs through the Girsanov constants and is compared in log space; the
/// exponent e^{2 theta |xi|^2} is evaluated as printed, and optionally the
/// un-squared e^{2 theta |xi|} next to it for information.
inline ConditionVerdict check_thm22(double theta1, double theta2, double vartheta1, double vartheta2,
                                    double xi1, double xi2, double safety = 0.5,
                                    bool unsquared_variant = false) {
    detail::require_positive(theta1, "theta1");
    detail::require_positive(theta2, "theta2");
    if (vartheta1 == 0.0 || vartheta2 == 0.0)
        throw domain_error("check_thm22 needs vartheta1 != 0 and vartheta2 != 0");
    ConditionVerdict v;
    v.theorem = "thm22";
    v.safety = safety;
    const double a1 = std::abs(vartheta1), a2 = std::abs(vartheta2);

    v.records.push_back(detail::compare("(i) 4 theta1 |vartheta1| e^{2 theta2 |xi2|} <= theta2^2",
                                        4.0 * theta1 * a1 * std::exp(2.0 * theta2 * xi2), theta2 * theta2,
                                        Relation::le));
    v.records.push_back(detail::compare("(i) 4 theta2 |vartheta2| e^{2 theta1 |xi1|} <= theta1^2",
                                        4.0 * theta2 * a2 * std::exp(2.0 * theta1 * xi1), theta1 * theta1,
                                        Relation::le));

    const auto g = girsanov_constants(2.0 * std::exp(theta1 * xi1), safety);
    const auto gb = girsanov_constants(2.0 * std::exp(theta2 * xi2), safety);
    const double logL4 = log_l_p(4.0);
    const double ln8 = std::log(8.0);

    auto cond_ii = [&](const GirsanovConstants& c, double a, double th_other, double xi_other,
                       bool squared) {
        const double expo = squared ? 2.0 * th_other * xi_other * xi_other : 2.0 * th_other * xi_other;
        const double lhs_wo_vartheta = ln8 + 4.0 * logL4 + 2.0 * c.log_c2 + expo;
        const double rhs = c.log_c1 + 2.0 * std::log(th_other);
        return std::pair{lhs_wo_vartheta + 2.0 * detail::log_abs(a), rhs};
    };
    {
        auto [l, r] = cond_ii(g, a1, theta2, xi2, true);
        v.records.push_back(detail::compare_log(
            "(ii) 8 L4^4 c2^2 |vartheta1|^2 e^{2 theta2 |xi2|^2} <= c1 theta2^2", l, r, Relation::le));
        v.constants["log_abs_vartheta1_max_ii"] = 0.5 * (r - (l - 2.0 * detail::log_abs(a1)));
    }
    {
        auto [l, r] = cond_ii(gb, a2, theta1, xi1, true);
        v.records.push_back(detail::compare_log(
            "(ii) 8 L4^4 cbar2^2 |vartheta2|^2 e^{2 theta1 |xi1|^2} <= cbar1 theta1^2", l, r, Relation::le));
        v.constants["log_abs_vartheta2_max_ii"] = 0.5 * (r - (l - 2.0 * detail::log_abs(a2)));
    }
    if (unsquared_variant) {
        auto [l1, r1] = cond_ii(g, a1, theta2, xi2, false);
        v.informational.push_back(detail::compare_log(
            "(ii, unsquared) 8 L4^4 c2^2 |vartheta1|^2 e^{2 theta2 |xi2|} <= c1 theta2^2", l1, r1, Relation::le));
        auto [l2, r2] = cond_ii(gb, a2, theta1, xi1, false);
        v.informational.push_back(detail::compare_log(
            "(ii, unsquared) 8 L4^4 cbar2^2 |vartheta2|^2 e^{2 theta1 |xi1|} <= cbar1 theta1^2", l2, r2, Relation::le));
    }

    v.constants["L4"] = std::exp(logL4);
    v.constants["K"] = g.K;
    v.constants["K_bar_input"] = gb.K;
    v.constants["log_c1"] = g.log_c1;
    v.constants["log_c2"] = g.log_c2;
    v.constants["log_cbar1"] = gb.log_c1;
    v.constants["log_cbar2"] = gb.log_c2;
    v.constants["c1"] = g.c1;
    v.constants["c2"] = g.c2;
    v.constants["cbar1"] = gb.c1;
    v.constants["cbar2"] = gb.c2;
    v.girsanov = g;
    v.girsanov_bar = gb;
    v.bounds["z_bmo_1"] = std::exp(theta1 * xi1) / theta1;
    v.bounds["z_bmo_2"] = std::exp(theta2 * xi2) / theta2;
    detail::finish(v);
    return v;
}

struct Thm23Data {
    double lambda = 0.0;
    int windows = 0;
    double sum_xi = 0.0;
    double C = 0.0, beta = 0.0, T = 0.0;
    int n = 1;

    /// (sum |xi^i| + n C T) e^{n beta (T - t)}
    double y_bound(double t) const {
        return (sum_xi + n * C * T) * std::exp(n * beta * (T - t));
    }
};

inline Thm23Data thm23_data(double C, double beta, double theta, const std::vector<double>& xi_norms,
                            double T, int n) {
    if (!(beta > 0.0)) throw domain_error("value-coupled systems need beta > 0");
    if (!(theta > 0.0)) throw domain_error("value-coupled systems need theta > 0");
    if (!(C >= 0.0)) throw domain_error("value-coupled systems need C >= 0");
    if (n < 1) throw domain_error("system dimension must be >= 1");
    if (!(T > 0.0)) throw domain_error("horizon must be > 0");
    Thm23Data d;
    d.lambda = 1.0 / (2.0 * beta * n);
    d.windows = int(std::ceil(2.0 * beta * n * T));
    for (double x : xi_norms) d.sum_xi += x;
    d.C = C;
    d.beta = beta;
    d.T = T;
    d.n = n;
    return d;
}

/// Coupling in the value process only: always solvable under the structural
/// assumptions; the verdict records the window length and the explicit bound.
inline ConditionVerdict check_thm23(double C, double beta, double theta, const std::vector<double>& xi_norms,
                                    double T, int n) {
    const auto d = thm23_data(C, beta, theta, xi_norms, T, n);
    ConditionVerdict v;
    v.theorem = "thm23";
    v.records.push_back(detail::compare("beta > 0", 0.0, beta, Relation::lt));
    v.records.push_back(detail::compare("theta > 0", 0.0, theta, Relation::lt));
    v.constants["lambda"] = d.lambda;
    v.constants["windows"] = d.windows;
    v.constants["n"] = n;
    v.bounds["y_abs_at_0"] = d.y_bound(0.0);
    detail::finish(v);
    return v;
}

namespace detail {

inline void require_coeffs(const CoeffSet& c) {
    for (int i = 0; i < 2; ++i) {
        require_positive(c.gamma[i], "gamma_i");
        require_positive(c.eta[i], "eta_i");
        if (c.alpha[i] < 0.0 || c.beta[i] < 0.0 || c.theta[i] < 0.0)
            throw domain_error("alpha_i, beta_i, theta_i must be >= 0");
        if (c.xi_norm[i] < 0.0) throw domain_error("terminal norms must be >= 0");
    }
    if (c.C < 0.0) throw domain_error("C must be >= 0");
    require_positive(c.T, "T");
    if (!((c.beta[0] + c.beta[1]) * c.T < 1.0))
        throw domain_error("(beta1+beta2)T < 1 fails");
}

}  // namespace detail

/// Fully coupled 2-d system, quadratic candidate set (slack delta).
inline ConditionVerdict check_thm31(const CoeffSet& c) {
    detail::require_coeffs(c);
    if (!(c.delta > 0.0 && c.delta < 1.0)) throw domain_error("delta must be in (0,1)");
    ConditionVerdict v;
    v.theorem = "thm31";
    const double T = c.T, C = c.C, delta = c.delta;
    const double bsum = (c.beta[0] + c.beta[1]) * T;
    const double lg = std::log(1.0 / (1.0 - delta));
    const double A = (c.xi_norm[0] + c.xi_norm[1] + 4.0 * C * T + lg / (2.0 * c.gamma[0]) +
                      lg / (2.0 * c.gamma[1])) / (1.0 - bsum);
    v.constants["A"] = A;
    v.constants["delta"] = delta;

    v.records.push_back(detail::compare("(i) (beta1+beta2)T < 1", bsum, 1.0, Relation::lt));
    const double gmax = std::max(c.gamma[0], c.gamma[1]);
    const auto gamma_rec = detail::compare("gamma1 v gamma2 < 1/(2A)", gmax, 1.0 / (2.0 * A), Relation::lt);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::array<double, 2> D{nan, nan};
    const bool well_posed = 2.0 * c.gamma[0] * A < 1.0 && 2.0 * c.gamma[1] * A < 1.0;
    if (well_posed) {
        for (int i = 0; i < 2; ++i) {
            D[i] = (c.xi_norm[i] * c.xi_norm[i] + 4.0 * C * T * A + 2.0 * c.beta[i] * T * A * A +
                    delta * A / c.gamma[i]) / (1.0 - 2.0 * c.gamma[i] * A);
        }
    } else {
        v.status = VerdictStatus::not_verifiable;
        v.reason = "2 gamma_i A >= 1: the constants D_i are not defined";
    }
    const double Dsum = D[0] + D[1];
    v.constants["D1"] = D[0];
    v.constants["D2"] = D[1];

    v.records.push_back(detail::compare("D1+D2 <= delta/(2 gamma1 eta1) ^ delta/(2 eta2 gamma2)", Dsum,
                                        std::min(delta / (2.0 * c.gamma[0] * c.eta[0]),
                                                 delta / (2.0 * c.eta[1] * c.gamma[1])),
                                        Relation::le));
    v.records.push_back(gamma_rec);

    std::array<double, 2> th2;
    for (int i = 0; i < 2; ++i) th2[i] = c.theta[i] * c.theta[i] * (T + 2.0 * D[i]);
    v.records.push_back(detail::compare("theta1^2(T+2D1) v theta2^2(T+2D2) < 1/72",
                                        std::max(th2[0], th2[1]), 1.0 / 72.0, Relation::lt));

    auto quotient = [](double num, double den) {
        if (num == 0.0) return 0.0;
        return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
    };
    std::array<double, 2> den{1.0 - 72.0 * th2[0], 1.0 - 72.0 * th2[1]};
    double alpha_lhs = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double a2T2 = c.alpha[i] * c.alpha[i] * T * T;
        alpha_lhs += 48.0 * a2T2 + quotient(24.0 * a2T2, den[i]);
    }
    if (!well_posed && alpha_lhs > 0.0) alpha_lhs = nan;
    v.records.push_back(detail::compare(
        "48 a1^2T^2 + 48 a2^2T^2 + 24 a1^2T^2/(1-72 theta1^2(T+2D1)) + 24 a2^2T^2/(1-72 theta2^2(T+2D2)) < 1",
        alpha_lhs, 1.0, Relation::lt));

    const double span = T + 2.0 * Dsum;
    double vt_lhs = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double w = c.vartheta[i] * c.vartheta[i] * span;
        vt_lhs += 144.0 * w + quotient(72.0 * w, den[i]);
    }
    v.records.push_back(detail::compare(
        "144 v1^2(T+2(D1+D2)) + 144 v2^2(T+2(D1+D2)) + 72 v1^2(..)/(1-72 theta1^2(T+2D1)) + 72 v2^2(..)/(1-72 theta2^2(T+2D2)) < 1",
        vt_lhs, 1.0, Relation::lt));

    v.bounds["y_sup"] = A;
    v.bounds["z_bmo"] = std::sqrt(Dsum);
    detail::finish(v);
    return v;
}

/// Fully coupled 2-d system, exponential candidate set.
inline ConditionVerdict check_thm32(const CoeffSet& c) {
    detail::require_coeffs(c);
    ConditionVerdict v;
    v.theorem = "thm32";
    v.safety = c.safety;
    const double T = c.T, C = c.C;
    const double bsum = (c.beta[0] + c.beta[1]) * T;
    const double ln2 = std::numbers::ln2;
    const double A = (c.xi_norm[0] + c.xi_norm[1] + 4.0 * C * T + ln2 / (2.0 * c.gamma[0]) +
                      ln2 / (2.0 * c.gamma[1])) / (1.0 - bsum);
    v.constants["A"] = A;
    std::array<double, 2> D;
    for (int i = 0; i < 2; ++i) {
        const double g = c.gamma[i];
        D[i] = std::exp(2.0 * g * c.xi_norm[i]) / (2.0 * g * g) *
               (1.0 + std::exp(4.0 * g * C * T + 2.0 * g * c.beta[i] * T * A) *
                          (8.0 * g * C * T + 4.0 * g * c.beta[i] * T * A + 1.0));
    }
    const double Dsum = D[0] + D[1];
    v.constants["D1"] = D[0];
    v.constants["D2"] = D[1];

    v.records.push_back(detail::compare("(i) (beta1+beta2)T < 1", bsum, 1.0, Relation::lt));
    v.records.push_back(detail::compare("D1+D2 <= 1/(4 gamma1 eta1) ^ 1/(4 eta2 gamma2)", Dsum,
                                        std::min(1.0 / (4.0 * c.gamma[0] * c.eta[0]),
                                                 1.0 / (4.0 * c.eta[1] * c.gamma[1])),
                                        Relation::le));

    detail::require_positive(c.theta[0], "theta1");
    detail::require_positive(c.theta[1], "theta2");
    const auto g = girsanov_constants(2.0 * c.theta[0] * D[0], c.safety);
    const auto gb = girsanov_constants(2.0 * c.theta[1] * D[1], c.safety);
    const double logL4 = log_l_p(4.0);
    v.girsanov = g;
    v.girsanov_bar = gb;
    v.constants["L4"] = std::exp(logL4);
    v.constants["K"] = g.K;
    v.constants["K_bar_input"] = gb.K;
    v.constants["log_c1"] = g.log_c1;
    v.constants["log_c2"] = g.log_c2;
    v.constants["log_cbar1"] = gb.log_c1;
    v.constants["log_cbar2"] = gb.log_c2;
    v.constants["c1"] = g.c1;
    v.constants["c2"] = g.c2;
    v.constants["cbar1"] = gb.c1;
    v.constants["cbar2"] = gb.c2;

    const double ninf = -std::numeric_limits<double>::infinity();
    auto log_sq = [&](double x) { return x == 0.0 ? ninf : 2.0 * detail::log_abs(x); };
    const double logT = std::log(T);

    // alpha_i^2 T^2 (1 + 1/c1_i)
    const double la1 = log_sq(c.alpha[0]) + 2.0 * logT + detail::softplus(-g.log_c1);
    const double la2 = log_sq(c.alpha[1]) + 2.0 * logT + detail::softplus(-gb.log_c1);
    v.records.push_back(detail::compare_log("a1^2T^2(1+1/c1) + a2^2T^2(1+1/cbar1) < 1/4",
                                            detail::log_add(la1, la2), std::log(0.25), Relation::lt));

    // vartheta_i^2 c2 L4^2 (T + 2 c2 L4^2 (D1+D2)) (1 + 1/c1)
    auto vt_term = [&](double vt, const GirsanovConstants& gc) {
        const double inner = detail::log_add(logT, ln2 + gc.log_c2 + 2.0 * logL4 + std::log(Dsum));
        return log_sq(vt) + gc.log_c2 + 2.0 * logL4 + inner + detail::softplus(-gc.log_c1);
    };
    v.records.push_back(detail::compare_log(
        "v1^2 c2 L4^2 (T+2 c2 L4^2 (D1+D2))(1+1/c1) + v2^2 cbar2 L4^2 (T+2 cbar2 L4^2 (D1+D2))(1+1/cbar1) < 1/(12 sqrt 3)",
        detail::log_add(vt_term(c.vartheta[0], g), vt_term(c.vartheta[1], gb)),
        -std::log(12.0 * std::sqrt(3.0)), Relation::lt));

    v.bounds["y_sup"] = A;
    v.bounds["z_bmo"] = std::sqrt(Dsum);
    detail::finish(v);
    return v;
}

}  // namespace qbsde
