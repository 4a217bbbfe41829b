#include "commands.hpp"

#include "modred/baecore.hpp"
#include "modred/eit.hpp"
#include "modred/io.hpp"
#include "modred/random.hpp"
#include "modred/spotlight.hpp"
#include "modred/tomo.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

namespace modred::cli {

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

Outcome within(double value, double tol) {
    std::ostringstream s;
    s << "value " << value << " tol " << tol;
    return {std::isfinite(value) && value <= tol, s.str()};
}

// Length of the segment (sx,sy)-(dx,dy) inside the unit square, by clipping.
double chord_in_unit_square(const tomo::Ray& r) {
    double t0 = 0.0, t1 = 1.0;
    const double d[2] = {r.dx - r.sx, r.dy - r.sy};
    const double s[2] = {r.sx, r.sy};
    for (int a = 0; a < 2; ++a) {
        if (d[a] == 0.0) {
            if (s[a] < 0.0 || s[a] > 1.0) return 0.0;
            continue;
        }
        double lo = (0.0 - s[a]) / d[a], hi = (1.0 - s[a]) / d[a];
        if (lo > hi) std::swap(lo, hi);
        t0 = std::max(t0, lo);
        t1 = std::min(t1, hi);
    }
    return t1 > t0 ? (t1 - t0) * std::hypot(d[0], d[1]) : 0.0;
}

Outcome projector_pair() {
    const DenseMatrix A = standard_normal_matrix(40, 6, 1);
    const spotlight::Projector P(orthonormal_basis(A));
    const Vector v = standard_normal_vector(40, 2);
    const Vector p = P.apply_P(v);
    const double idem = (P.apply_P(p) - p).norm();
    const double split = (p + P.apply_Pperp(v) - v).norm();
    const double orth = std::abs(p.dot(P.apply_Pperp(v)));
    return within(std::max({idem, split, orth}) / v.norm(), 1e-12);
}

Outcome smw_identity() {
    bae::ErrorSample sample{standard_normal_matrix(30, 8, 3)};
    const bae::ErrorModel model = bae::error_statistics(sample, 0.3);
    const DenseMatrix K = bae::smw_whitener(model);
    const DenseMatrix C = model.S * model.S.transpose() + 0.09 * DenseMatrix::Identity(30, 30);
    const DenseMatrix inv = (DenseMatrix::Identity(30, 30) - K * K.transpose()) / 0.09;
    return within((inv * C - DenseMatrix::Identity(30, 30)).norm(), 1e-9);
}

Outcome kl_reconstruction() {
    bae::ErrorSample sample{standard_normal_matrix(25, 10, 4)};
    const bae::ErrorModel model = bae::error_statistics(sample, 1.0);
    const bae::KLExpansion kl = bae::kl_expand(model);
    const DenseMatrix C = model.S * model.S.transpose();
    const DenseMatrix R = kl.U * kl.lambdas.asDiagonal() * kl.U.transpose();
    return within((R - C).norm() / C.norm(), 1e-10);
}

Outcome lsqr_discrepancy() {
    const DenseMatrix A = standard_normal_matrix(60, 20, 5);
    const Vector x = standard_normal_vector(20, 6);
    const Vector e = 0.05 * standard_normal_vector(60, 7);
    MorozovOptions o;
    o.noise_norm = e.norm();
    o.tau = 1.1;
    const LsqrResult r = lsqr_morozov(LinearOperator::from_dense(A), A * x + e, o);
    const double true_res = (A * r.x - A * x - e).norm();
    const bool ok = !r.reached_discrepancy() || true_res <= o.tau * o.noise_norm * (1 + 1e-12);
    return {ok && std::abs(true_res - r.residual_norm) <= 1e-10 * (1 + true_res),
            "residual " + io::format_double(true_res) + " reason " + to_string(r.reason)};
}

Outcome fanbeam_chords() {
    const tomo::PixelGrid grid{16};
    tomo::FanBeamGeometry g;
    g.n_angles = 12;
    g.n_rays = 21;
    const SparseMatrix A = tomo::build_fanbeam_matrix(grid, g);
    double worst = 0.0;
    for (Index l = 0; l < g.ray_count(); ++l)
        worst = std::max(worst, std::abs(A.row(l).sum() - chord_in_unit_square(tomo::fanbeam_ray(g, l))));
    return within(worst, 1e-12);
}

Outcome fanbeam_adjoint() {
    const tomo::PixelGrid grid{12};
    tomo::FanBeamGeometry g;
    g.n_angles = 8;
    g.n_rays = 15;
    return within(adjoint_defect(LinearOperator::from_sparse(tomo::build_fanbeam_matrix(grid, g))), 1e-12);
}

Outcome coarsening_consistency() {
    const tomo::PixelGrid grid{16};
    const tomo::CoarseMap map = tomo::build_coarsening(grid, tomo::SpotlightRegion::centered(grid, 8), 4);
    const Vector z = standard_normal_vector(map.coarse_size(), 8);
    const double back = (tomo::restrict_image(map, tomo::prolong_image(map, z)) - z).norm();
    tomo::FanBeamGeometry g;
    g.n_angles = 6;
    g.n_rays = 11;
    const SparseMatrix A = tomo::build_fanbeam_matrix(grid, g);
    const DenseMatrix dense = DenseMatrix(A) * DenseMatrix(map.P).transpose();
    const double coarse = (DenseMatrix(tomo::coarse_matrix(A, map)) - dense).norm();
    return within(std::max(back / z.norm(), coarse / dense.norm()), 1e-12);
}

Outcome cem_gauge_and_reciprocity() {
    const eit::Electrodes el = eit::equispaced_electrodes(8, 0.5, 0.02);
    const eit::DiskMesh mesh = eit::unit_disk_mesh(1, el);
    const Vector sigma = (0.3 * standard_normal_vector(mesh.element_count(), 9)).array().exp().matrix();
    const DenseMatrix frame = eit::pairwise_frame(8);
    const eit::CemSolution s = eit::cem_forward(mesh, sigma, el, frame);
    const double gauge = s.U.colwise().sum().cwiseAbs().maxCoeff();
    // Reciprocity: the transfer matrix between patterns is symmetric.
    const DenseMatrix R = frame.transpose() * s.U;
    const double recip = (R - R.transpose()).norm() / R.norm();
    return within(std::max(gauge, recip), 1e-9);
}

Outcome jacobian_fd() {
    const eit::Electrodes el = eit::equispaced_electrodes(8, 0.5, 0.02);
    const eit::DiskMesh mesh = eit::unit_disk_mesh(1, el);
    const DenseMatrix frame = eit::pairwise_frame(8);
    const Vector x = 0.2 * standard_normal_vector(mesh.element_count(), 10);
    const Vector dir = standard_normal_vector(mesh.element_count(), 11);
    const double h = 1e-6;
    auto V = [&](const Vector& xx) { return eit::cem_forward(mesh, xx.array().exp().matrix(), el, frame).V; };
    const Vector fd = (V(x + h * dir) - V(x - h * dir)) / (2 * h);
    const Vector jv = eit::cem_jacobian(mesh, x.array().exp().matrix(), el, frame) * dir;
    return within((fd - jv).norm() / jv.norm(), 1e-6);
}

Outcome mrd1_round_trip() {
    const DenseMatrix M = standard_normal_matrix(7, 5, 12);
    const DenseMatrix back = io::decode_mrd1(io::encode_mrd1(M));
    return {back.rows() == 7 && back.cols() == 5 && back == M, "bitwise"};
}

}  // namespace

int run_checks(std::ostream& out) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
        {"projector-pair", projector_pair},
        {"smw-identity", smw_identity},
        {"kl-reconstruction", kl_reconstruction},
        {"lsqr-discrepancy", lsqr_discrepancy},
        {"fanbeam-chord-lengths", fanbeam_chords},
        {"fanbeam-adjoint", fanbeam_adjoint},
        {"coarsening-consistency", coarsening_consistency},
        {"cem-gauge-reciprocity", cem_gauge_and_reciprocity},
        {"cem-jacobian-fd", jacobian_fd},
        {"mrd1-round-trip", mrd1_round_trip},
    };
    int failed = 0;
    for (const auto& [name, fn] : checks) {
        Outcome o{false, ""};
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        out << (o.pass ? "PASS " : "FAIL ") << name << "  " << o.detail << "\n";
        failed += o.pass ? 0 : 1;
    }
    out << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed") << "\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace modred::cli
