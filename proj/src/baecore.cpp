#include "modred/baecore.hpp"

#include "modred/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace modred::bae {

ErrorSample sample_error(const ForwardMap& f_star, const ForwardMap& f, const JointSampler& sampler,
                         Index L, std::uint64_t seed) {
    if (L < 1) throw std::invalid_argument("sample_error: L must be >= 1");
    std::vector<Vector> draws(static_cast<std::size_t>(L));
    parallel_for(static_cast<std::size_t>(L), [&](std::size_t j) {
        try {
            const auto [x, z] = sampler(seed + j);
            Vector fine = f_star(x);
            const Vector coarse = f(z);
            if (fine.size() != coarse.size())
                throw std::runtime_error("forward maps disagree on data dimension");
            if (!fine.allFinite() || !coarse.allFinite())
                throw std::runtime_error("forward map returned non-finite values");
            draws[j] = fine - coarse;
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "sample_error: draw " << j << " failed: " << e.what();
            throw std::runtime_error(msg.str());
        }
    });
    ErrorSample out;
    out.draws.resize(draws.front().size(), L);
    for (Index j = 0; j < L; ++j) {
        if (draws[j].size() != out.draws.rows())
            throw std::runtime_error("sample_error: draws have inconsistent lengths");
        out.draws.col(j) = draws[j];
    }
    return out;
}

ErrorModel error_statistics(const ErrorSample& sample, double sigma) {
    if (sample.count() < 1) throw std::invalid_argument("error_statistics: empty sample");
    if (!(sigma > 0.0)) throw std::invalid_argument("error_statistics: sigma must be positive");
    ErrorModel model;
    model.sigma = sigma;
    model.mu = sample.draws.rowwise().mean();
    model.S = (sample.draws.colwise() - model.mu) / std::sqrt(static_cast<double>(sample.count()));
    return model;
}

KLExpansion kl_expand(const ErrorModel& model, double rel_tol) {
    KLExpansion out;
    out.mu = model.mu;
    if (model.S.cols() == 0 || model.S.rows() == 0) {
        out.U.resize(model.dim(), 0);
        return out;
    }
    const LeanSvd svd = lean_svd(model.S);
    const Index r = numerical_rank(svd.d, rel_tol);
    out.lambdas = svd.d.head(r).array().square();
    out.U = svd.U.leftCols(r);
    return out;
}

DenseMatrix smw_whitener(const ErrorModel& model) {
    if (!(model.sigma > 0.0)) throw std::invalid_argument("smw_whitener: sigma must be positive");
    const Index k = model.S.cols();
    if (k == 0) return DenseMatrix::Zero(model.S.rows(), 0);
    DenseMatrix gram = model.S.transpose() * model.S;
    gram.diagonal().array() += model.sigma * model.sigma;
    // gram = C C^T (Cholesky); R = C^-1 satisfies R^T R = gram^-1.
    const Eigen::LLT<DenseMatrix> llt(gram);
    if (llt.info() != Eigen::Success) throw std::runtime_error("smw_whitener: Cholesky breakdown");
    // K = S R^T = S C^-T, i.e. K^T = C^-1 S^T.
    const DenseMatrix Kt = llt.matrixL().solve(model.S.transpose());
    return Kt.transpose();
}

double weighted_misfit(const ErrorModel& model, const DenseMatrix& K, const Vector& r) {
    const Vector Ktr = K.transpose() * r;
    return (r.squaredNorm() - Ktr.squaredNorm()) / (model.sigma * model.sigma);
}

BaeSolveResult bae_normal_solve(const LinearOperator& A, const Vector& b, const ErrorModel& model,
                                const BaeSolveOptions& opts) {
    if (b.size() != A.rows() || model.dim() != A.rows() || model.S.rows() != A.rows())
        throw std::invalid_argument("bae_normal_solve: dimension mismatch");
    const DenseMatrix K = smw_whitener(model);
    auto whiten = [&K](const Vector& r) -> Vector { return r - K * (K.transpose() * r); };

    const Vector shifted = b - model.mu;
    auto normal_op = [&](const Vector& x) -> Vector { return A.apply_adjoint(whiten(A.apply(x))); };
    const LinearOperator M(A.cols(), A.cols(), normal_op, normal_op);
    const Vector rhs = A.apply_adjoint(whiten(shifted));

    auto discrepancy = [&](const Vector& x) {
        const Vector r = shifted - A.apply(x);
        return std::sqrt(std::max(0.0, r.dot(whiten(r))));
    };

    BaeSolveResult out;
    const double target = opts.tau * opts.noise_norm;
    out.discrepancy_history.push_back(discrepancy(Vector::Zero(A.cols())));
    if (target > 0.0 && out.discrepancy_history.back() <= target) {
        out.x = Vector::Zero(A.cols());
        out.reason = StopReason::discrepancy;
        out.weighted_discrepancy = out.discrepancy_history.back();
        return out;
    }

    CgMonitor monitor;
    if (target > 0.0) {
        monitor = [&](const Vector& x, int) {
            out.discrepancy_history.push_back(discrepancy(x));
            return out.discrepancy_history.back() <= target;
        };
    }
    const double cg_target = opts.target_residual > 0.0 ? opts.target_residual : 1e-12 * rhs.norm();
    const CgResult cg = cg_spd(M, rhs, cg_target, opts.max_iter, monitor);

    out.x = cg.x;
    out.iterations = cg.iterations;
    out.weighted_discrepancy = discrepancy(out.x);
    if (target <= 0.0) out.discrepancy_history.push_back(out.weighted_discrepancy);
    if (cg.stopped_by_monitor) out.reason = StopReason::discrepancy;
    else if (cg.converged) out.reason = StopReason::numerical;
    else if (cg.iterations < opts.max_iter) out.reason = StopReason::numerical;  // null-space exhaustion
    else out.reason = StopReason::max_iter;
    return out;
}

Vector gaussian_map_estimate(const LinearOperator& F, const Vector& b, const ErrorModel& model,
                             const SparseMatrix& prior_precision) {
    const Index n = F.cols();
    if (b.size() != F.rows() || model.dim() != F.rows())
        throw std::invalid_argument("gaussian_map_estimate: dimension mismatch");
    const bool has_prior = prior_precision.nonZeros() > 0;
    if (has_prior && (prior_precision.rows() != n || prior_precision.cols() != n))
        throw std::invalid_argument("gaussian_map_estimate: prior precision has wrong size");

    const DenseMatrix Fd = F.to_dense();
    const DenseMatrix K = smw_whitener(model);
    const double s2 = model.sigma * model.sigma;
    const DenseMatrix KtF = K.transpose() * Fd;
    DenseMatrix H = (Fd.transpose() * Fd - KtF.transpose() * KtF) / s2;
    const Vector r = b - model.mu;
    const Vector g = (Fd.transpose() * r - KtF.transpose() * (K.transpose() * r)) / s2;
    if (has_prior) H += DenseMatrix(prior_precision);

    const Eigen::LDLT<DenseMatrix> ldlt(H);
    const double scale = H.cwiseAbs().maxCoeff();
    const auto& D = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(scale > 0.0) || D.minCoeff() <= 1e-13 * scale)
        throw std::runtime_error("gaussian_map_estimate: singular normal system");
    return ldlt.solve(g);
}

}  // namespace modred::bae
