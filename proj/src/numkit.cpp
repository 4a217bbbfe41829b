#include "modred/numkit.hpp"

#include "modred/random.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace modred {

LinearOperator::LinearOperator(Index rows, Index cols, Action forward, Action adjoint)
    : rows_(rows), cols_(cols), forward_(std::move(forward)), adjoint_(std::move(adjoint)) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("LinearOperator: negative dimension");
    if (!forward_ || !adjoint_) throw std::invalid_argument("LinearOperator: missing action");
}

LinearOperator LinearOperator::from_dense(DenseMatrix A) {
    auto shared = std::make_shared<const DenseMatrix>(std::move(A));
    return LinearOperator(
        shared->rows(), shared->cols(), [shared](const Vector& v) -> Vector { return (*shared) * v; },
        [shared](const Vector& w) -> Vector { return shared->transpose() * w; });
}

LinearOperator LinearOperator::from_sparse(SparseMatrix A) {
    auto shared = std::make_shared<const SparseMatrix>(std::move(A));
    return LinearOperator(
        shared->rows(), shared->cols(), [shared](const Vector& v) -> Vector { return (*shared) * v; },
        [shared](const Vector& w) -> Vector { return shared->transpose() * w; });
}

LinearOperator LinearOperator::identity(Index n) {
    auto id = [](const Vector& v) -> Vector { return v; };
    return LinearOperator(n, n, id, id);
}

Vector LinearOperator::apply(const Vector& v) const {
    if (v.size() != cols_) throw std::invalid_argument("LinearOperator::apply: dimension mismatch");
    Vector out = forward_(v);
    if (out.size() != rows_) throw std::runtime_error("LinearOperator::apply: action returned wrong size");
    return out;
}

Vector LinearOperator::apply_adjoint(const Vector& w) const {
    if (w.size() != rows_)
        throw std::invalid_argument("LinearOperator::apply_adjoint: dimension mismatch");
    Vector out = adjoint_(w);
    if (out.size() != cols_)
        throw std::runtime_error("LinearOperator::apply_adjoint: action returned wrong size");
    return out;
}

DenseMatrix LinearOperator::to_dense() const {
    DenseMatrix M(rows_, cols_);
    Vector e = Vector::Zero(cols_);
    for (Index j = 0; j < cols_; ++j) {
        e(j) = 1.0;
        M.col(j) = apply(e);
        e(j) = 0.0;
    }
    return M;
}

double adjoint_defect(const LinearOperator& A, int probes, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    double norm_est = 0.0;
    std::vector<std::pair<Vector, Vector>> pairs;
    for (int p = 0; p < probes; ++p) {
        Vector v = standard_normal_vector(A.cols(), rng);
        Vector w = standard_normal_vector(A.rows(), rng);
        const Vector Av = A.apply(v);
        norm_est = std::max(norm_est, Av.norm() / std::max(v.norm(), 1e-300));
        pairs.emplace_back(std::move(v), std::move(w));
    }
    for (const auto& [v, w] : pairs) {
        const double lhs = A.apply(v).dot(w);
        const double rhs = v.dot(A.apply_adjoint(w));
        const double scale = v.norm() * w.norm() * norm_est;
        if (scale > 0.0) worst = std::max(worst, std::abs(lhs - rhs) / scale);
        else worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

LeanSvd lean_svd(const DenseMatrix& A) {
    if (A.rows() < 1 || A.cols() < 1) throw std::invalid_argument("lean_svd: empty matrix");
    // Column-pivoted QR preconditioning makes tall-skinny inputs cheap.
    Eigen::JacobiSVD<DenseMatrix, Eigen::ColPivHouseholderQRPreconditioner> svd(
        A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Index numerical_rank(const Vector& singular_values, double rel_tol) {
    if (singular_values.size() == 0) return 0;
    const double top = singular_values(0);
    if (!(top > 0.0)) return 0;
    Index r = 0;
    while (r < singular_values.size() && singular_values(r) > rel_tol * top) ++r;
    return r;
}

DenseMatrix orthonormal_basis(const DenseMatrix& A, BasisMethod method, double rel_tol) {
    if (A.rows() < 1 || A.cols() < 1) throw std::invalid_argument("orthonormal_basis: empty matrix");
    if (method == BasisMethod::svd) {
        const LeanSvd svd = lean_svd(A);
        return svd.U.leftCols(numerical_rank(svd.d, rel_tol));
    }
    Eigen::ColPivHouseholderQR<DenseMatrix> qr(A);
    const auto& R = qr.matrixR();
    const Index diag = std::min(A.rows(), A.cols());
    const double top = diag > 0 ? std::abs(R(0, 0)) : 0.0;
    Index r = 0;
    if (top > 0.0)
        while (r < diag && std::abs(R(r, r)) > rel_tol * top) ++r;
    DenseMatrix Q = DenseMatrix::Identity(A.rows(), r);
    Q = qr.householderQ() * Q;
    return Q;
}

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::discrepancy: return "discrepancy";
        case StopReason::numerical: return "numerical";
        case StopReason::max_iter: return "max_iter";
        case StopReason::zero_rhs: return "zero_rhs";
    }
    return "unknown";
}

LsqrResult lsqr_morozov(const LinearOperator& A, const Vector& b, const MorozovOptions& opts) {
    if (b.size() != A.rows()) throw std::invalid_argument("lsqr_morozov: rhs size mismatch");
    if (!b.allFinite()) throw std::invalid_argument("lsqr_morozov: rhs not finite");
    if (opts.noise_norm < 0.0) throw std::invalid_argument("lsqr_morozov: negative noise norm");
    if (opts.tau < 1.0) throw std::invalid_argument("lsqr_morozov: tau must be >= 1");

    const double target = opts.tau * opts.noise_norm;
    LsqrResult out;
    out.x = Vector::Zero(A.cols());

    Vector u = b;
    double beta = u.norm();
    const double bnorm = beta;
    out.residual_history.push_back(bnorm);
    out.residual_norm = bnorm;
    if (beta == 0.0) {
        out.reason = StopReason::zero_rhs;
        return out;
    }
    if (target > 0.0 && bnorm <= target) {
        out.reason = StopReason::discrepancy;
        return out;
    }
    u /= beta;
    Vector v = A.apply_adjoint(u);
    double alpha = v.norm();
    if (alpha == 0.0) {
        // b is orthogonal to range(A); x = 0 is the least-squares solution.
        out.reason = StopReason::numerical;
        return out;
    }
    v /= alpha;

    Vector w = v;
    double phibar = beta;
    double rhobar = alpha;
    double anorm_sq = 0.0;

    for (int itn = 1; itn <= opts.max_iter; ++itn) {
        u = A.apply(v) - alpha * u;
        beta = u.norm();
        if (beta > 0.0) u /= beta;
        anorm_sq += alpha * alpha + beta * beta;

        v = A.apply_adjoint(u) - beta * v;
        alpha = v.norm();
        if (alpha > 0.0) v /= alpha;

        const double rho = std::hypot(rhobar, beta);
        const double c = rhobar / rho;
        const double s = beta / rho;
        const double theta = s * alpha;
        rhobar = -c * alpha;
        const double phi = c * phibar;
        phibar = s * phibar;

        out.x += (phi / rho) * w;
        w = v - (theta / rho) * w;
        out.iterations = itn;
        out.residual_history.push_back(phibar);

        if (target > 0.0 && phibar <= target) {
            // Confirm against the true residual; recurrences drift slightly.
            const double true_res = (A.apply(out.x) - b).norm();
            if (true_res <= target) {
                out.residual_history.back() = true_res;
                out.residual_norm = true_res;
                out.reason = StopReason::discrepancy;
                return out;
            }
        }

        const double arnorm = phibar * alpha * std::abs(c);
        const double anorm = std::sqrt(anorm_sq);
        if (phibar <= opts.btol * bnorm || arnorm <= opts.atol * anorm * phibar || alpha == 0.0 ||
            beta == 0.0) {
            out.reason = StopReason::numerical;
            break;
        }
        if (itn == opts.max_iter) out.reason = StopReason::max_iter;
    }
    if (opts.max_iter <= 0) out.reason = StopReason::max_iter;

    out.residual_norm = (A.apply(out.x) - b).norm();
    out.residual_history.back() = out.residual_norm;
    return out;
}

CgResult cg_spd(const LinearOperator& M, const Vector& rhs, double target_residual, int max_iter,
                const CgMonitor& monitor) {
    if (M.rows() != M.cols()) throw std::invalid_argument("cg_spd: operator not square");
    if (rhs.size() != M.rows()) throw std::invalid_argument("cg_spd: rhs size mismatch");
    {
        Rng rng(11);
        double norm_est = 0.0;
        for (int p = 0; p < 3; ++p) {
            const Vector v = standard_normal_vector(M.cols(), rng);
            const Vector w = standard_normal_vector(M.cols(), rng);
            const Vector Mv = M.apply(v);
            const Vector Mw = M.apply(w);
            norm_est = std::max({norm_est, Mv.norm() / v.norm(), Mw.norm() / w.norm()});
            const double defect = std::abs(Mv.dot(w) - v.dot(Mw));
            if (defect > 1e-10 * v.norm() * w.norm() * norm_est)
                throw std::invalid_argument("cg_spd: operator failed the symmetry probe");
        }
    }

    CgResult out;
    out.x = Vector::Zero(rhs.size());
    Vector r = rhs;
    double rr = r.squaredNorm();
    out.residual_norm = std::sqrt(rr);
    if (out.residual_norm <= target_residual) {
        out.converged = true;
        return out;
    }
    Vector p = r;
    for (int it = 1; it <= max_iter; ++it) {
        const Vector Mp = M.apply(p);
        const double pMp = p.dot(Mp);
        if (!(pMp > 0.0)) break;  // direction in the null space: nothing left to reduce
        const double step = rr / pMp;
        out.x += step * p;
        r -= step * Mp;
        const double rr_next = r.squaredNorm();
        out.iterations = it;
        out.residual_norm = std::sqrt(rr_next);
        if (monitor && monitor(out.x, it)) {
            out.stopped_by_monitor = true;
            out.converged = out.residual_norm <= target_residual;
            return out;
        }
        if (out.residual_norm <= target_residual) {
            out.converged = true;
            return out;
        }
        p = r + (rr_next / rr) * p;
        rr = rr_next;
    }
    out.residual_norm = (M.apply(out.x) - rhs).norm();
    out.converged = out.residual_norm <= target_residual;
    return out;
}

struct SpdSolver::Impl {
    SparseMatrix matrix;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
};

SpdSolver::SpdSolver(const SparseMatrix& M) : impl_(std::make_unique<Impl>()) {
    if (M.rows() != M.cols()) throw std::invalid_argument("SpdSolver: matrix not square");
    if (!is_symmetric(M, 1e-12)) throw std::invalid_argument("SpdSolver: matrix not symmetric");
    impl_->matrix = M;
    impl_->matrix.makeCompressed();
    Eigen::SparseMatrix<double> colmajor = impl_->matrix;
    impl_->llt.compute(colmajor);
    if (impl_->llt.info() != Eigen::Success)
        throw std::runtime_error("SpdSolver: Cholesky breakdown (matrix not positive definite)");
}

SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

Index SpdSolver::size() const { return impl_->matrix.rows(); }

const SparseMatrix& SpdSolver::matrix() const { return impl_->matrix; }

Vector SpdSolver::solve(const Vector& rhs, double tol) const {
    if (rhs.size() != size()) throw std::invalid_argument("SpdSolver::solve: rhs size mismatch");
    Vector x = impl_->llt.solve(rhs);
    const double bnorm = rhs.norm();
    Vector r = rhs - impl_->matrix * x;
    if (r.norm() > tol * bnorm) {
        x += impl_->llt.solve(r);
        r = rhs - impl_->matrix * x;
    }
    if (!x.allFinite() || r.norm() > tol * bnorm) {
        std::ostringstream msg;
        msg << "SpdSolver::solve: residual " << r.norm() << " exceeds " << tol * bnorm;
        throw std::runtime_error(msg.str());
    }
    return x;
}

Vector sparse_spd_solve(const SparseMatrix& M, const Vector& rhs, double tol) {
    return SpdSolver(M).solve(rhs, tol);
}

bool is_symmetric(const SparseMatrix& M, double rel_tol) {
    if (M.rows() != M.cols()) return false;
    const SparseMatrix T = M.transpose();
    const double scale = std::max(M.norm(), 1e-300);
    return (M - T).norm() <= rel_tol * scale;
}

double sample_std(const std::vector<double>& values) {
    if (values.size() < 2) throw std::invalid_argument("sample_std: need at least two values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace modred
