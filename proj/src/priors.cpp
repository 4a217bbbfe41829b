#include "modred/priors.hpp"

#include "modred/parallel.hpp"
#include "modred/random.hpp"

#include <cmath>
#include <stdexcept>

namespace modred::priors {

using Triplet = Eigen::Triplet<double>;

SparseMatrix build_grid_laplacian(Index nx, Index ny) {
    if (nx < 2 || ny < 2) throw std::invalid_argument("build_grid_laplacian: need nx, ny >= 2");
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(5 * nx * ny));
    auto idx = [nx](Index ix, Index iy) { return iy * nx + ix; };
    for (Index iy = 0; iy < ny; ++iy)
        for (Index ix = 0; ix < nx; ++ix) {
            const Index k = idx(ix, iy);
            double degree = 0.0;
            auto couple = [&](Index jx, Index jy) {
                trips.emplace_back(k, idx(jx, jy), -1.0);
                degree += 1.0;
            };
            if (ix > 0) couple(ix - 1, iy);
            if (ix + 1 < nx) couple(ix + 1, iy);
            if (iy > 0) couple(ix, iy - 1);
            if (iy + 1 < ny) couple(ix, iy + 1);
            trips.emplace_back(k, k, degree);
        }
    SparseMatrix L(nx * ny, nx * ny);
    L.setFromTriplets(trips.begin(), trips.end());
    L.makeCompressed();
    return L;
}

SparseMatrix build_graph_laplacian(Index n_nodes, const std::vector<std::pair<Index, Index>>& edges) {
    if (n_nodes <= 0 || edges.empty()) throw std::invalid_argument("build_graph_laplacian: empty graph");
    std::vector<Triplet> trips;
    std::vector<double> degree(static_cast<std::size_t>(n_nodes), 0.0);
    for (const auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n_nodes || b >= n_nodes || a == b)
            throw std::invalid_argument("build_graph_laplacian: invalid edge");
        trips.emplace_back(a, b, -1.0);
        trips.emplace_back(b, a, -1.0);
        degree[a] += 1.0;
        degree[b] += 1.0;
    }
    for (Index i = 0; i < n_nodes; ++i) trips.emplace_back(i, i, degree[i]);
    SparseMatrix L(n_nodes, n_nodes);
    // Duplicate edges would double-count; collapse them to weight -1.
    L.setFromTriplets(trips.begin(), trips.end(), [](double a, double) { return a; });
    L.makeCompressed();
    for (Index i = 0; i < n_nodes; ++i) {
        double offdiag = 0.0;
        for (SparseMatrix::InnerIterator it(L, i); it; ++it)
            if (it.col() != i) offdiag -= it.value();
        L.coeffRef(i, i) = offdiag;
    }
    return L;
}

GaussianFieldPrior::GaussianFieldPrior(SparseMatrix laplacian, double lambda)
    : laplacian_(std::move(laplacian)), lambda_(lambda) {
    if (!(lambda_ > 0.0)) throw std::invalid_argument("GaussianFieldPrior: lambda must be positive");
    if (laplacian_.rows() != laplacian_.cols() || laplacian_.rows() == 0)
        throw std::invalid_argument("GaussianFieldPrior: laplacian must be square and nonempty");
    SparseMatrix shift(laplacian_.rows(), laplacian_.cols());
    shift.setIdentity();
    system_ = laplacian_ + (1.0 / (lambda_ * lambda_)) * shift;
    system_.makeCompressed();
    solver_ = std::make_shared<const SpdSolver>(system_);
}

Vector GaussianFieldPrior::solve(const Vector& white) const {
    const Vector xi = solver_->solve(white, 1e-8);
    return xi;
}

Vector GaussianFieldPrior::draw(std::uint64_t seed) const {
    return solve(standard_normal_vector(dim(), seed));
}

Vector sigmoid_transform(const Vector& xi, double xi0, double alpha, double gamma) {
    if (!(alpha > 0.0) || !(gamma > 0.0))
        throw std::invalid_argument("sigmoid_transform: alpha and gamma must be positive");
    Vector out(xi.size());
    for (Index j = 0; j < xi.size(); ++j) {
        const double t = alpha * (xi0 - xi(j));
        if (t >= 0.0) {
            const double e = std::exp(-t);
            out(j) = gamma * e / (1.0 + e);
        } else {
            out(j) = gamma / (1.0 + std::exp(t));
        }
    }
    return out;
}

SigmoidFieldPrior::SigmoidFieldPrior(GaussianFieldPrior field, SigmoidParams params)
    : field_(std::move(field)), params_(params) {
    if (!(params_.alpha > 0.0) || !(params_.gamma > 0.0))
        throw std::invalid_argument("SigmoidFieldPrior: alpha and gamma must be positive");
}

Vector SigmoidFieldPrior::draw(std::uint64_t seed) const {
    return sigmoid_transform(field_.draw(seed), params_.xi0, params_.alpha, params_.gamma);
}

namespace {
template <typename DrawFn>
DenseMatrix draw_columns(Index dim, Index n_draws, std::uint64_t seed, const DrawFn& draw) {
    if (n_draws < 1) throw std::invalid_argument("prior draws: n_draws must be >= 1");
    DenseMatrix out(dim, n_draws);
    parallel_for(static_cast<std::size_t>(n_draws), [&](std::size_t j) {
        out.col(static_cast<Index>(j)) = draw(seed + j);
    });
    return out;
}
}  // namespace

DenseMatrix draw_gaussian_field(const GaussianFieldPrior& prior, Index n_draws, std::uint64_t seed) {
    return draw_columns(prior.dim(), n_draws, seed, [&](std::uint64_t s) { return prior.draw(s); });
}

DenseMatrix draw_sigmoid_prior(const SigmoidFieldPrior& prior, Index n_draws, std::uint64_t seed) {
    return draw_columns(prior.dim(), n_draws, seed, [&](std::uint64_t s) { return prior.draw(s); });
}

}  // namespace modred::priors
