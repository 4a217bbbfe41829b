#include "modred/spotlight.hpp"

#include "modred/parallel.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace modred::spotlight {

Projector::Projector(DenseMatrix basis) : basis_(std::move(basis)) {
    if (basis_.cols() > basis_.rows())
        throw std::invalid_argument("Projector: more basis vectors than dimensions");
    if (basis_.cols() > 0) {
        const DenseMatrix gram = basis_.transpose() * basis_;
        const double defect = (gram - DenseMatrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
        if (!(defect <= 1e-10)) {
            std::ostringstream msg;
            msg << "Projector: basis not orthonormal (max Gram defect " << defect << ")";
            throw std::invalid_argument(msg.str());
        }
    }
}

Projector Projector::empty(Index dim) { return Projector(DenseMatrix::Zero(dim, 0)); }

Vector Projector::apply_P(const Vector& v) const {
    if (v.size() != dim()) throw std::invalid_argument("Projector: dimension mismatch");
    if (rank() == 0) return Vector::Zero(dim());
    return basis_ * (basis_.transpose() * v);
}

Vector Projector::apply_Pperp(const Vector& v) const {
    if (v.size() != dim()) throw std::invalid_argument("Projector: dimension mismatch");
    if (rank() == 0) return v;
    return v - basis_ * (basis_.transpose() * v);
}

DenseMatrix Projector::apply_Pperp(const DenseMatrix& M) const {
    if (M.rows() != dim()) throw std::invalid_argument("Projector: dimension mismatch");
    if (rank() == 0) return M;
    return M - basis_ * (basis_.transpose() * M);
}

ClutterDiagnostics make_diagnostics(const Vector& singular_values, double noise_norm) {
    ClutterDiagnostics diag;
    diag.lambdas = singular_values.array().square();
    const Index r = diag.lambdas.size();
    diag.tail = Vector::Zero(r + 1);
    for (Index k = r - 1; k >= 0; --k) diag.tail(k) = diag.tail(k + 1) + diag.lambdas(k);
    diag.suggested_k = r;
    for (Index k = 0; k <= r; ++k)
        if (std::sqrt(diag.tail(k)) <= noise_norm) {
            diag.suggested_k = k;
            break;
        }
    return diag;
}

namespace {

ProjectorResult basis_from_columns(const DenseMatrix& cols, Index keep, const SketchOptions& opts) {
    const LeanSvd svd = lean_svd(cols);
    const Index rank = numerical_rank(svd.d, opts.rel_tol);
    ClutterDiagnostics diag = make_diagnostics(svd.d.head(rank), opts.noise_norm);
    if (rank == 0) {
        diag.warnings.push_back("degenerate sketch: all draws are numerically zero, projector has rank 0");
        return {Projector::empty(cols.rows()), std::move(diag)};
    }
    if (keep > rank) {
        std::ostringstream msg;
        msg << "requested rank " << keep << " exceeds numerical rank " << rank << "; truncated";
        diag.warnings.push_back(msg.str());
        keep = rank;
    }
    DenseMatrix basis;
    if (opts.method == BasisMethod::svd) {
        basis = svd.U.leftCols(keep);
    } else {
        basis = orthonormal_basis(cols, BasisMethod::qr, opts.rel_tol);
        if (basis.cols() > keep) basis.conservativeResize(Eigen::NoChange, keep);
    }
    return {Projector(std::move(basis)), std::move(diag)};
}

}  // namespace

ProjectorResult priorsketch(const LinearOperator& A2, const PriorSampler& x2_sampler, Index k,
                            std::uint64_t seed, const SketchOptions& opts) {
    if (k < 1) throw std::invalid_argument("priorsketch: k must be >= 1");
    DenseMatrix sketch(A2.rows(), k);
    const double scale = 1.0 / std::sqrt(static_cast<double>(k));
    parallel_for(static_cast<std::size_t>(k), [&](std::size_t j) {
        Vector x2;
        try {
            x2 = x2_sampler(seed + j);
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "priorsketch: prior draw " << j << " failed: " << e.what();
            throw std::runtime_error(msg.str());
        }
        sketch.col(static_cast<Index>(j)) = A2.apply(scale * x2);
    });
    return basis_from_columns(sketch, k, opts);
}

ProjectorResult projector_from_error_sample(const bae::ErrorSample& sample, Index k, double noise_norm,
                                            double rel_tol) {
    const Index L = sample.count();
    if (k < 1 || k > L) throw std::invalid_argument("projector_from_error_sample: need 1 <= k <= L");
    const Vector mu = sample.draws.rowwise().mean();
    const DenseMatrix centered = (sample.draws.colwise() - mu) / std::sqrt(static_cast<double>(L));
    SketchOptions opts;
    opts.rel_tol = rel_tol;
    opts.noise_norm = noise_norm;
    return basis_from_columns(centered, k, opts);
}

ProjectedSystem project_system(const Projector& proj, const LinearOperator& A, const Vector& b,
                               const Vector& mu) {
    if (A.rows() != proj.dim() || b.size() != proj.dim() || mu.size() != proj.dim())
        throw std::invalid_argument("project_system: dimension mismatch");
    auto shared = std::make_shared<const Projector>(proj);
    LinearOperator op(
        A.rows(), A.cols(), [A, shared](const Vector& v) -> Vector { return shared->apply_Pperp(A.apply(v)); },
        [A, shared](const Vector& w) -> Vector { return A.apply_adjoint(shared->apply_Pperp(w)); });
    return {std::move(op), proj.apply_Pperp(Vector(b - mu))};
}

LsqrResult spotlight_solve(const Projector& proj, const LinearOperator& A, const Vector& b,
                           const Vector& mu, const MorozovOptions& opts) {
    const ProjectedSystem sys = project_system(proj, A, b, mu);
    return lsqr_morozov(sys.op, sys.rhs, opts);
}

Vector gaussian_clutter_map(const DenseMatrix& A1, const DenseMatrix& A2, const DenseMatrix& C11,
                            const DenseMatrix& C22, const DenseMatrix& Ce, const Vector& b) {
    const Index m = A1.rows();
    const Index n = A1.cols();
    if (A2.rows() != m || b.size() != m || Ce.rows() != m || Ce.cols() != m || C11.rows() != n ||
        C11.cols() != n || C22.rows() != A2.cols() || C22.cols() != A2.cols())
        throw std::invalid_argument("gaussian_clutter_map: dimension mismatch");
    const DenseMatrix G = A2 * C22 * A2.transpose() + Ce;
    const Eigen::LLT<DenseMatrix> g_llt(G);
    if (g_llt.info() != Eigen::Success) throw std::runtime_error("gaussian_clutter_map: clutter+noise covariance singular");
    const Eigen::LLT<DenseMatrix> c11_llt(C11);
    if (c11_llt.info() != Eigen::Success) throw std::runtime_error("gaussian_clutter_map: C11 singular");

    const DenseMatrix GinvA1 = g_llt.solve(A1);
    DenseMatrix H = A1.transpose() * GinvA1 + c11_llt.solve(DenseMatrix::Identity(n, n));
    H = 0.5 * (H + H.transpose());
    const Eigen::LLT<DenseMatrix> h_llt(H);
    if (h_llt.info() != Eigen::Success) throw std::runtime_error("gaussian_clutter_map: normal matrix singular");
    return h_llt.solve(GinvA1.transpose() * b);
}

}  // namespace modred::spotlight
