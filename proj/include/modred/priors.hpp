#pragma once

#include "modred/numkit.hpp"

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace modred::priors {

/// 5-point Laplacian on an nx-by-ny grid with zero-flux boundary; node
/// (ix, iy) has index iy * nx + ix. Unit grid spacing.
SparseMatrix build_grid_laplacian(Index nx, Index ny);

/// Laplacian of an undirected graph given by its edge list.
SparseMatrix build_graph_laplacian(Index n_nodes, const std::vector<std::pair<Index, Index>>& edges);

/// Gaussian field Xi solving (L + lambda^-2 I) Xi = W, W ~ N(0, I).
class GaussianFieldPrior {
public:
    GaussianFieldPrior(SparseMatrix laplacian, double lambda);

    Index dim() const { return laplacian_.rows(); }
    double lambda() const { return lambda_; }
    const SparseMatrix& laplacian() const { return laplacian_; }
    /// L + lambda^-2 I.
    const SparseMatrix& precision_root() const { return system_; }

    /// Single draw from an independent generator seeded with `seed`.
    Vector draw(std::uint64_t seed) const;
    /// Residual of the last solve is checked against 1e-8 |w|.
    Vector solve(const Vector& white) const;

private:
    SparseMatrix laplacian_;
    double lambda_;
    SparseMatrix system_;
    std::shared_ptr<const SpdSolver> solver_;
};

struct SigmoidParams {
    double xi0 = 0.0;
    double alpha = 3.0;
    double gamma = 1.0;
};

/// gamma / (1 + exp(alpha (xi0 - xi_j))), evaluated without overflow.
Vector sigmoid_transform(const Vector& xi, double xi0, double alpha, double gamma);

class SigmoidFieldPrior {
public:
    SigmoidFieldPrior(GaussianFieldPrior field, SigmoidParams params);

    const GaussianFieldPrior& field() const { return field_; }
    const SigmoidParams& params() const { return params_; }
    Index dim() const { return field_.dim(); }

    Vector draw(std::uint64_t seed) const;

private:
    GaussianFieldPrior field_;
    SigmoidParams params_;
};

/// Column j is drawn with seed + j, so results do not depend on scheduling.
DenseMatrix draw_gaussian_field(const GaussianFieldPrior& prior, Index n_draws, std::uint64_t seed);
DenseMatrix draw_sigmoid_prior(const SigmoidFieldPrior& prior, Index n_draws, std::uint64_t seed);

}  // namespace modred::priors
