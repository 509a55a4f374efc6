#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/oracles.hpp"
#include "qbsde/solver1d.hpp"

using namespace qbsde;

namespace {

std::vector<double> terminal(const Lattice& lat, const std::function<double(double)>& phi) {
    std::vector<double> xi(lat.nodes_at(lat.steps()));
    for (std::size_t v = 0; v < xi.size(); ++v) xi[v] = phi(lat.walk(lat.steps(), v, 0));
    return xi;
}

AdaptedProcess constant_process(const Lattice& lat, double c) {
    AdaptedProcess g(lat);
    for (int k = 0; k <= lat.steps(); ++k)
        for (double& v : g.at(k)) v = c;
    return g;
}

double max_abs(const ControlProcess& z) {
    double m = 0.0;
    for (int k = 0; k < z.lattice().steps(); ++k)
        for (double v : z.at(k)) m = std::max(m, std::abs(v));
    return m;
}

// (1/2 gamma) log E[exp(2 gamma xi)] at the root by summing over all 2^N paths.
double cole_hopf_by_paths(const Lattice& lat, double gamma, const std::vector<double>& xi) {
    double acc = 0.0;
    const unsigned long paths = 1ul << lat.steps();
    for (unsigned long bits = 0; bits < paths; ++bits)
        acc += std::exp(2 * gamma * xi[oracle::path_nodes(lat, bits).back()]);
    return std::log(acc / double(paths)) / (2 * gamma);
}

}  // namespace

TEST(SolveBackward, ConstantTerminal) {
    const Lattice lat(1.0, 6, 2);
    const std::vector<double> xi(lat.nodes_at(6), 1.5);
    for (auto scheme : {Scheme::explicit_euler, Scheme::implicit_euler}) {
        const auto sol = solve_backward(lat, xi, pure_quadratic(0.7), scheme);
        for (int k = 0; k <= 6; ++k)
            for (double y : sol.Y.at(k)) EXPECT_DOUBLE_EQ(y, 1.5);
        EXPECT_EQ(max_abs(sol.Z), 0.0);
        EXPECT_EQ(sol.residual, 0.0);
    }
}

TEST(SolveBackward, WalkTerminal) {
    for (auto topo : {Topology::tree, Topology::recombining}) {
        const Lattice lat(2.0, 8, 1, topo);
        const auto sol = solve_backward(lat, terminal(lat, [](double w) { return w; }), Driver1D{});
        for (int k = 0; k <= 8; ++k)
            for (std::size_t v = 0; v < lat.nodes_at(k); ++v) EXPECT_NEAR(sol.Y(k, v), lat.walk(k, v, 0), 1e-14);
        for (int k = 0; k < 8; ++k)
            for (double z : sol.Z.at(k)) EXPECT_NEAR(z, 1.0, 1e-13);
    }
}

TEST(SolveBackward, DeterministicIntegral) {
    const Lattice lat(1.0, 10, 1, Topology::recombining);
    Driver1D drv;
    drv.g = constant_process(lat, 1.0);
    const auto sol = solve_backward(lat, std::vector<double>(lat.nodes_at(10), 0.0), drv);
    for (int k = 0; k <= 10; ++k)
        for (double y : sol.Y.at(k)) EXPECT_NEAR(y, 1.0 - lat.time(k), 1e-14);
    EXPECT_EQ(max_abs(sol.Z), 0.0);
}

TEST(SolveBackward, TerminalAndOneStepConsistency) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    const Lattice lat(1.0, 8, 1);
    std::vector<double> xi(lat.nodes_at(8));
    for (double& x : xi) x = u(rng);
    Driver1D drv = pure_quadratic(0.4);
    AdaptedProcess g(lat);
    for (int k = 0; k < 8; ++k)
        for (double& v : g.at(k)) v = 0.3 * u(rng);
    drv.g = g;
    const auto sol = solve_backward(lat, xi, drv);
    for (std::size_t v = 0; v < xi.size(); ++v) EXPECT_EQ(sol.Y(8, v), xi[v]);
    for (int k = 0; k < 8; ++k)
        for (std::size_t v = 0; v < lat.nodes_at(k); ++v) {
            const double z = sol.Z.row(k, v)[0];
            const double f = 0.4 * z * z + g(k, v);
            for (int s = 0; s < 2; ++s) {
                const double eps = lat.increment(s, 0);
                const double next = sol.Y(k + 1, lat.child(k, v, s));
                // Y_k + Z eps - Y_{k+1} - dt (f + g) = 0
                EXPECT_NEAR(sol.Y(k, v) + z * eps - next - lat.dt() * f, 0.0, 1e-13);
            }
        }
}

TEST(SolveBackward, ZeroDataStaysZero) {
    const Lattice lat(1.0, 16, 1, Topology::recombining);
    Driver1D drv = pure_quadratic(2.0);
    drv.g = constant_process(lat, 0.0);
    const auto sol = solve_backward(lat, std::vector<double>(lat.nodes_at(16), 0.0), drv);
    EXPECT_EQ(sup_norm(sol.Y), 0.0);
    EXPECT_EQ(max_abs(sol.Z), 0.0);
}

TEST(SolveBackward, ImplicitLinearMatchesStepRecursion) {
    // g = beta y with constant terminal: Y_k = Y_{k+1} / (1 - beta dt) for the implicit scheme
    const double beta = 0.8, c = 1.0;
    const Lattice lat(1.0, 20, 1, Topology::recombining);
    Driver1D drv;
    drv.f = [beta](const NodeContext&, double y, std::span<const double>) { return beta * y; };
    drv.depends_on_y = true;
    const auto sol = solve_backward(lat, std::vector<double>(lat.nodes_at(20), c), drv, Scheme::implicit_euler);
    EXPECT_NEAR(sol.Y(0, 0), c * std::pow(1.0 - beta * lat.dt(), -20), 1e-10);
    EXPECT_GT(sol.max_inner_iterations, 1);
    // the explicit scheme evaluates y at the conditional mean: Y_k = (1 + beta dt) Y_{k+1}
    const auto ex = solve_backward(lat, std::vector<double>(lat.nodes_at(20), c), drv);
    EXPECT_NEAR(ex.Y(0, 0), c * std::pow(1.0 + beta * lat.dt(), 20), 1e-12);
}

TEST(SolveBackward, ImplicitDivergenceIsReported) {
    const Lattice lat(1.0, 2, 1);
    Driver1D drv;
    drv.f = [](const NodeContext&, double y, std::span<const double>) { return 10.0 * y * y; };
    drv.depends_on_y = true;
    EXPECT_THROW(solve_backward(lat, std::vector<double>(lat.nodes_at(2), 5.0), drv, Scheme::implicit_euler),
                 divergence_error);
    EXPECT_THROW(solve_backward(lat, std::vector<double>(lat.nodes_at(2), 0.1), drv, Scheme::implicit_euler,
                                1e-12, 2),
                 divergence_error);
}

TEST(SolveBackward, GrowthAssertion) {
    const Lattice lat(1.0, 4, 1);
    Driver1D drv = pure_quadratic(1.0);
    drv.gamma = 0.5;  // declared growth too small
    drv.check_growth = true;
    EXPECT_THROW(solve_backward(lat, terminal(lat, [](double w) { return w; }), drv), growth_violation);
    drv.gamma = 1.0;
    EXPECT_NO_THROW(solve_backward(lat, terminal(lat, [](double w) { return w; }), drv));
}

TEST(SolveBackward, ShapeAndToleranceErrors) {
    const Lattice lat(1.0, 3, 1);
    EXPECT_THROW(solve_backward(lat, std::vector<double>(3, 0.0), Driver1D{}), step_mismatch);
    EXPECT_THROW(solve_backward(lat, std::vector<double>(8, 0.0), Driver1D{}, Scheme::explicit_euler, 0.0),
                 invalid_parameter);
}

TEST(ColeHopf, ConstantTerminal) {
    const Lattice lat(1.0, 5, 1);
    const auto y = cole_hopf_oracle(lat, 0.5, std::vector<double>(lat.nodes_at(5), -0.3));
    for (int k = 0; k <= 5; ++k)
        for (double v : y.at(k)) EXPECT_NEAR(v, -0.3, 1e-15);
}

TEST(ColeHopf, TwoNodeClosedForm) {
    const Lattice lat(1.0, 1, 1);
    const double gamma = 0.7, a = 1.3;
    std::vector<double> xi(2, 0.0);
    xi[lat.child(0, 0, 0)] = a;  // the up move
    const auto y = cole_hopf_oracle(lat, gamma, xi);
    EXPECT_NEAR(y(0, 0), std::log((std::exp(2 * gamma * a) + 1) / 2) / (2 * gamma), 1e-15);
}

TEST(ColeHopf, AgreesWithPathEnumeration) {
    const Lattice lat(1.0, 12, 1);
    const auto xi = terminal(lat, [](double w) { return std::sin(3 * w); });
    for (double gamma : {0.1, 1.0, 5.0})
        EXPECT_NEAR(cole_hopf_oracle(lat, gamma, xi)(0, 0), cole_hopf_by_paths(lat, gamma, xi), 1e-13);
}

TEST(ColeHopf, SmallGammaMatchesLinearSolve) {
    const Lattice lat(1.0, 16, 1, Topology::recombining);
    const auto xi = terminal(lat, [](double w) { return std::tanh(w); });
    const auto g = constant_process(lat, 0.25);
    Driver1D lin;
    lin.g = g;
    const auto sol = solve_backward(lat, xi, lin);
    const auto y = cole_hopf_oracle(lat, 1e-6, xi, &g);
    EXPECT_NEAR(y(0, 0), sol.Y(0, 0), 1e-5);
}

TEST(ColeHopf, LargeExponentsStayFinite) {
    const Lattice lat(1.0, 8, 1);
    const auto y = cole_hopf_oracle(lat, 50.0, terminal(lat, [](double w) { return 20 * w; }));
    EXPECT_TRUE(std::isfinite(y(0, 0)));
    EXPECT_THROW(cole_hopf_oracle(lat, 0.0, std::vector<double>(lat.nodes_at(8), 0.0)), invalid_parameter);
}

TEST(ConvergenceLadder, TanhTerminalGapsShrink) {
    const double gamma = 0.5;
    double prev = std::numeric_limits<double>::infinity();
    for (int N : {8, 16, 32, 64}) {
        const Lattice lat(1.0, N, 1, Topology::recombining);
        const auto xi = terminal(lat, [](double w) { return std::tanh(w); });
        const double gap = std::abs(solve_backward(lat, xi, pure_quadratic(gamma)).Y(0, 0) -
                                    cole_hopf_oracle(lat, gamma, xi)(0, 0));
        EXPECT_LE(gap, prev) << N;
        prev = gap;
    }
    EXPECT_LT(prev, 1e-2);
}

TEST(LemmaA, Examples) {
    auto b = lemma_a_bounds(1.0, 0.0, 0.0, 0.0, 1.0);
    EXPECT_EQ(b.ybound, 0.0);
    EXPECT_NEAR(b.zbound, 1.0 / std::sqrt(2.0), 1e-15);
    b = lemma_a_bounds(1.0, 0.0, 1.0, 0.0, 1.0);
    EXPECT_NEAR(b.ybound, 1.0, 1e-15);
    EXPECT_NEAR(b.zbound, std::exp(1.0) / std::sqrt(2.0), 1e-14);
}

TEST(LemmaA, BlowUpAtSmallnessBoundary) {
    const double edge = 1.0 / std::sqrt(2.0);
    const auto near = lemma_a_bounds(1.0, 0.1, 0.5, edge * (1 - 1e-9), 1.0);
    EXPECT_GT(near.ybound, 5.0);
    EXPECT_GT(near.zbound, 1e3);
    EXPECT_THROW(lemma_a_bounds(1.0, 0.1, 0.5, 1.0001 * edge, 1.0), domain_error);
    EXPECT_THROW(lemma_a_bounds(0.5, 0.1, 0.5, 1.0, 1.0), domain_error);  // 2 gamma zBMO^2 = 1 exactly
    EXPECT_THROW(lemma_a_bounds(0.0, 0.1, 0.5, 0.1, 1.0), domain_error);
}

TEST(LemmaA, BoundFidelityOnLattice) {
    // f = gamma |z|^2, g = |zbar|^2 for a constant control zbar = c, so ||zbar.W||_BMO = c sqrt(T)
    const double gamma = 0.5, c = 0.6, T = 1.0;
    const Lattice lat(T, 64, 1, Topology::recombining);
    const auto xi = terminal(lat, [](double w) { return 0.8 * std::tanh(w); });
    Driver1D drv = pure_quadratic(gamma);
    drv.g = constant_process(lat, c * c);
    const auto sol = solve_backward(lat, xi, drv);
    const auto b = lemma_a_bounds(gamma, 0.0, 0.8, c * std::sqrt(T), T);
    EXPECT_LE(sup_norm(sol.Y), 1.05 * b.ybound);
    EXPECT_LE(bmo_norm(sol.Z, 2.0), 1.05 * b.zbound);
}

TEST(CheckA4, DeterministicTerminal) {
    const Lattice lat(1.0, 6, 1);
    const auto v = check_a4(lat, std::vector<double>(lat.nodes_at(6), 3.0), 1.0, ControlProcess(lat));
    EXPECT_EQ(v.xi_bmo1, 0.0);
    EXPECT_TRUE(v.satisfied);
    EXPECT_TRUE(v.z_ok);
    EXPECT_DOUBLE_EQ(v.xi_threshold, 1.0 / 16);
    EXPECT_DOUBLE_EQ(v.z_threshold, 0.5);
}

TEST(CheckA4, ScaledWalkEventuallyViolates) {
    const Lattice lat(1.0, 8, 1);
    const auto unit = check_a4(lat, terminal(lat, [](double w) { return w; }), 1.0, ControlProcess(lat));
    for (double eps : {1e-3, 1e-2, 0.1}) {
        const auto v = check_a4(lat, terminal(lat, [eps](double w) { return eps * w; }), 1.0, ControlProcess(lat));
        EXPECT_NEAR(v.xi_bmo1, eps * unit.xi_bmo1, 1e-12) << eps;
    }
    EXPECT_TRUE(check_a4(lat, terminal(lat, [](double w) { return 1e-3 * w; }), 1.0, ControlProcess(lat)).xi_ok);
    EXPECT_FALSE(unit.xi_ok);
}

TEST(Compare, IdenticalAndShifted) {
    const Lattice lat(1.0, 8, 1);
    const auto xi = terminal(lat, [](double w) { return std::cos(w); });
    const auto a = solve_backward(lat, xi, pure_quadratic(0.5));
    const auto same = compare_solutions(a, solve_backward(lat, xi, pure_quadratic(0.5)));
    EXPECT_EQ(same.min_difference, 0.0);
    EXPECT_TRUE(same.passed);

    auto shifted = xi;
    for (double& x : shifted) x += 1.0;
    const auto b0 = solve_backward(lat, xi, Driver1D{});
    const auto b1 = solve_backward(lat, shifted, Driver1D{});
    const auto v = compare_solutions(b0, b1);
    EXPECT_NEAR(v.min_difference, 1.0, 1e-14);
    for (int k = 0; k <= 8; ++k)
        for (std::size_t i = 0; i < lat.nodes_at(k); ++i) EXPECT_NEAR(b1.Y(k, i) - b0.Y(k, i), 1.0, 1e-14);
    EXPECT_FALSE(compare_solutions(b1, b0).passed);
    EXPECT_NEAR(compare_solutions(b1, b0).violation, 1.0, 1e-14);
}

TEST(Compare, RandomOrderedPairs) {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0, 1);
    const Lattice lat(1.0, 16, 1);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> xi(lat.nodes_at(16)), xt(xi.size());
        for (std::size_t v = 0; v < xi.size(); ++v) {
            xi[v] = u(rng);
            xt[v] = xi[v] + 0.2 * u(rng);
        }
        const auto v = compare_solutions(solve_backward(lat, xi, pure_quadratic(0.5)),
                                         solve_backward(lat, xt, pure_quadratic(0.5)));
        EXPECT_GE(v.min_difference, -1e-8);
    }
}

TEST(Compare, LatticeMismatch) {
    const Lattice a(1.0, 4, 1), b(1.0, 5, 1);
    EXPECT_THROW(compare_solutions(solve_backward(a, std::vector<double>(16, 0.0), Driver1D{}),
                                   solve_backward(b, std::vector<double>(32, 0.0), Driver1D{})),
                 step_mismatch);
}
