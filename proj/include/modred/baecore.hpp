#pragma once

#include "modred/numkit.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace modred::bae {

/// Approximation-error draws m_j = f*(x_j) - f(z_j), stored as columns.
struct ErrorSample {
    DenseMatrix draws;  // m x L

    Index dim() const { return draws.rows(); }
    Index count() const { return draws.cols(); }
};

/// Gaussian (Laplace) surrogate of the error: N(mu, S S^T), plus white noise sigma.
struct ErrorModel {
    Vector mu;
    DenseMatrix S;  // m x k, columns (m_j - mu) / sqrt(k)
    double sigma = 1.0;

    Index dim() const { return mu.size(); }
};

struct KLExpansion {
    Vector mu;
    Vector lambdas;  // eigenvalues of S S^T, descending
    DenseMatrix U;   // m x r

    Index rank() const { return lambdas.size(); }
};

using ForwardMap = std::function<Vector(const Vector&)>;
/// Returns a joint prior draw (x, z) for the given seed.
using JointSampler = std::function<std::pair<Vector, Vector>(std::uint64_t seed)>;

/// Draw j uses seed + j; failures are rethrown naming the draw index.
ErrorSample sample_error(const ForwardMap& f_star, const ForwardMap& f, const JointSampler& sampler,
                         Index L, std::uint64_t seed);

ErrorModel error_statistics(const ErrorSample& sample, double sigma);

KLExpansion kl_expand(const ErrorModel& model, double rel_tol = 1e-10);

/// K with (S S^T + sigma^2 I)^-1 = sigma^-2 (I - K K^T).
DenseMatrix smw_whitener(const ErrorModel& model);

/// r^T (S S^T + sigma^2 I)^-1 r, evaluated through the whitener.
double weighted_misfit(const ErrorModel& model, const DenseMatrix& K, const Vector& r);

struct BaeSolveOptions {
    double noise_norm = 0.0;  // |e|; 0 runs to the residual target
    double tau = 1.0;
    int max_iter = 500;
    double target_residual = 0.0;  // absolute, on the normal equations; 0 -> 1e-12 |rhs|
};

struct BaeSolveResult {
    Vector x;
    int iterations = 0;
    StopReason reason = StopReason::max_iter;
    double weighted_discrepancy = 0.0;  // sqrt(r^T (I - K K^T) r)
    std::vector<double> discrepancy_history;
};

/// Minimizes (b - mu - Ax)^T (C + sigma^2 I)^-1 (b - mu - Ax) with matrix-free
/// CG on A^T (I - K K^T) A x = A^T (I - K K^T)(b - mu). Stops when the
/// whitened discrepancy sqrt(r^T (I - K K^T) r) falls to tau * noise_norm.
BaeSolveResult bae_normal_solve(const LinearOperator& A, const Vector& b, const ErrorModel& model,
                                const BaeSolveOptions& opts = {});

/// Linear MAP estimate: argmin (b-mu-Fz)^T (C + sigma^2 I)^-1 (b-mu-Fz) + z^T Q z,
/// Q the prior precision (may be empty/zero when F has full column rank).
Vector gaussian_map_estimate(const LinearOperator& F, const Vector& b, const ErrorModel& model,
                             const SparseMatrix& prior_precision);

}  // namespace modred::bae
