#pragma once

#include "modred/baecore.hpp"
#include "modred/numkit.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace modred::spotlight {

/// Orthogonal projector pair onto span(U) and its complement.
class Projector {
public:
    /// Rejects bases whose Gram matrix deviates from I by more than 1e-10.
    explicit Projector(DenseMatrix basis);
    static Projector empty(Index dim);

    Index dim() const { return basis_.rows(); }
    Index rank() const { return basis_.cols(); }
    const DenseMatrix& basis() const { return basis_; }

    Vector apply_P(const Vector& v) const;
    Vector apply_Pperp(const Vector& v) const;
    DenseMatrix apply_Pperp(const DenseMatrix& M) const;

private:
    DenseMatrix basis_;
};

/// Spectrum of the estimated clutter covariance and the truncation tail.
struct ClutterDiagnostics {
    Vector lambdas;             // squared singular values, descending
    Vector tail;                // tail(k) = sum_{j>k} lambda_j, k = 0..r
    Index suggested_k = 0;      // smallest k with sqrt(tail(k)) <= noise_norm
    std::vector<std::string> warnings;
};

ClutterDiagnostics make_diagnostics(const Vector& singular_values, double noise_norm);

struct ProjectorResult {
    Projector projector;
    ClutterDiagnostics diagnostics;
};

using PriorSampler = std::function<Vector(std::uint64_t seed)>;

struct SketchOptions {
    BasisMethod method = BasisMethod::svd;
    double rel_tol = 1e-10;
    double noise_norm = 0.0;  // only used for suggested_k
};

/// Priorsketching: Omega = k^-1/2 [x2_1 ... x2_k] with x2_j drawn from the
/// nuisance prior (seed + j), basis of range(A2 Omega).
ProjectorResult priorsketch(const LinearOperator& A2, const PriorSampler& x2_sampler, Index k,
                            std::uint64_t seed, const SketchOptions& opts = {});

/// First k left singular vectors of the centered, 1/sqrt(L)-scaled draws.
/// k above the numerical rank truncates with a warning in the diagnostics.
ProjectorResult projector_from_error_sample(const bae::ErrorSample& sample, Index k,
                                            double noise_norm = 0.0, double rel_tol = 1e-10);

struct ProjectedSystem {
    LinearOperator op;  // v -> Pperp A v
    Vector rhs;         // Pperp (b - mu)
};

ProjectedSystem project_system(const Projector& proj, const LinearOperator& A, const Vector& b,
                               const Vector& mu);

/// LSQR with Morozov stopping on the projected system. noise_norm is the
/// unprojected |e| estimate.
LsqrResult spotlight_solve(const Projector& proj, const LinearOperator& A, const Vector& b,
                           const Vector& mu, const MorozovOptions& opts);

/// Closed-form MAP of x1 with Gaussian clutter, dense; oracle-grade only:
/// (A1^T G^-1 A1 + C11^-1)^-1 A1^T G^-1 b, G = A2 C22 A2^T + Ce.
Vector gaussian_clutter_map(const DenseMatrix& A1, const DenseMatrix& A2, const DenseMatrix& C11,
                            const DenseMatrix& C22, const DenseMatrix& Ce, const Vector& b);

}  // namespace modred::spotlight
