// Two-dimensional cross-quadratic system
//   g^1 = vartheta |z^2|^2,  g^2 = vartheta |z^1|^2,  xi^i = sign(W^i_T) / 16
// with the smallness check, the Picard iteration and its contraction factor.

#include <cstdio>
#include <vector>

#include "qbsde/qbsde.hpp"

int main() {
    const qbsde::Lattice lat(1.0, 32, 2, qbsde::Topology::recombining);
    const int N = lat.steps();
    std::vector<double> xi1(lat.nodes_at(N)), xi2(lat.nodes_at(N));
    for (std::size_t v = 0; v < xi1.size(); ++v) {
        const double w1 = lat.walk(N, v, 0), w2 = lat.walk(N, v, 1);
        xi1[v] = ((w1 > 0) - (w1 < 0)) / 16.0;
        xi2[v] = ((w2 > 0) - (w2 < 0)) / 16.0;
    }
    const double vartheta = 1.0;

    const auto verdict = qbsde::check_thm21(vartheta, vartheta, 1.0 / 16, 1.0 / 16);
    std::printf("verdict: %s\n", qbsde::to_string(verdict.status));
    for (const auto& r : verdict.records)
        std::printf("  %-32s %.6g vs %.6g\n", r.name.c_str(), r.left, r.right);

    qbsde::PicardOptions opt;
    opt.bounds = verdict.bounds;
    const auto spec = qbsde::system2(lat, 0.0, 0.0, vartheta, vartheta, xi1, xi2);
    const auto rep = qbsde::picard_z_coupled(spec, opt);
    std::printf("converged: %s after %d iterations, contraction %.4f\n", rep.converged ? "yes" : "no",
                rep.iterations, qbsde::contraction_estimate(rep));
    std::printf("Y_0 = (%.10f, %.10f)\n", rep.Y[0](0, 0), rep.Y[1](0, 0));
    for (const auto& m : rep.membership)
        std::printf("  %-10s %.6g <= %.6g (+%.0f%%): %s\n", m.name.c_str(), m.value, m.bound, 100 * m.slack,
                    m.held ? "held" : "exceeded");
}
