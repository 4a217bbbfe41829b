#pragma once

#include "modred/baecore.hpp"
#include "modred/numkit.hpp"
#include "modred/priors.hpp"
#include "modred/spotlight.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace modred::eit {

using Edge = std::array<Index, 2>;
using Triangle = std::array<Index, 3>;

/// Electrode arcs on the unit circle, angles in radians, plus contact
/// impedances.
struct Electrodes {
    std::vector<std::pair<double, double>> arcs;  // [begin, end], begin < end
    Vector z;

    Index count() const { return static_cast<Index>(arcs.size()); }
    void validate() const;
};

/// L equal arcs covering `coverage` of the circle, electrode l centred at
/// angle 2 pi l / L.
Electrodes equispaced_electrodes(Index L = 32, double coverage = 0.5, double z = 0.01);

struct DiskMesh {
    DenseMatrix nodes;                     // n_nodes x 2
    std::vector<Triangle> triangles;       // counter-clockwise
    std::vector<Edge> boundary;            // closed, counter-clockwise
    std::vector<std::vector<Edge>> electrode_edges;

    Index node_count() const { return nodes.rows(); }
    Index element_count() const { return static_cast<Index>(triangles.size()); }
    Index electrode_count() const { return static_cast<Index>(electrode_edges.size()); }

    double signed_area(Index element) const;
    Vector areas() const;
    DenseMatrix centroids() const;  // n_elements x 2
    /// Throws on inverted elements, open boundary or shared electrode edges.
    void validate() const;
};

/// Concentric-ring triangulation of the unit disk with 5 * 2^(refinement-1)
/// rings. Electrode arc endpoints are mesh nodes.
DiskMesh unit_disk_mesh(int refinement, const Electrodes& electrodes);

/// Pairs of elements sharing an edge.
std::vector<std::pair<Index, Index>> element_adjacency(const DiskMesh& mesh);

struct ShapeParams {
    double a_c = 0.0;
    double a_s = 0.0;
    double x_scale = 1.0;

    void validate() const;
};

/// a_c = 0.05, a_s = 0, x_scale = 1.1.
ShapeParams standard_shape();

/// rho = r (1 + a_c cos 3t + a_s sin 3t), then x is multiplied by x_scale.
DiskMesh deform_mesh(const DiskMesh& mesh, const ShapeParams& shape);

/// a_c = 0.1 xi, a_s = 0.1 (nu - 1/2), x_scale = 1.1 with xi, nu ~ U[0, 1].
ShapeParams draw_random_shape(std::uint64_t seed);

/// Column k is e_k - e_L.
DenseMatrix pairwise_frame(Index L);

struct CemSolution {
    DenseMatrix u;  // n_nodes x n_patterns
    DenseMatrix U;  // L x n_patterns electrode voltages
    Vector V;       // U stacked pattern-major
};

/// Assembled complete-electrode system with the zero-sum voltage gauge and a
/// shared factorization. Unknowns are the nodal potentials followed by the
/// L-1 gauge coordinates of the electrode voltages.
class CemSystem {
public:
    CemSystem(const DiskMesh& mesh, const Vector& sigma, const Electrodes& electrodes);

    Index node_count() const { return n_nodes_; }
    Index electrode_count() const { return n_electrodes_; }
    CemSolution solve(const DenseMatrix& frame) const;
    /// Fields for unit "currents" C^T e_l, used as adjoint states.
    DenseMatrix adjoint_fields() const;

private:
    Vector solve_gauge(const Vector& gauge_rhs) const;

    Index n_nodes_;
    Index n_electrodes_;
    DenseMatrix gauge_;  // L x (L-1)
    SpdSolver solver_;
};

CemSolution cem_forward(const DiskMesh& mesh, const Vector& sigma, const Electrodes& electrodes,
                        const DenseMatrix& frame);

/// dV / dx for sigma_e = sigma0 exp(x_e), evaluated at `sigma`; columns
/// follow the element order.
DenseMatrix cem_jacobian(const DiskMesh& mesh, const Vector& sigma, const Electrodes& electrodes,
                         const DenseMatrix& frame);

/// Elements of the unit-disk mesh whose centroid lies inside `radius`.
std::vector<Index> interior_elements(const DiskMesh& unit_mesh, double radius = 0.9);

/// Sigmoid-Gaussian conductivity on the interior elements, defaults
/// lambda = 5, alpha = 3, gamma = 5 and xi0 chosen so that xi = 0 maps to 1.
priors::SigmoidFieldPrior make_eit_prior(const DiskMesh& unit_mesh, const std::vector<Index>& interior,
                                         double lambda = 5.0, double alpha = 3.0, double gamma = 5.0);

/// Embeds interior values into a full element vector filled with `background`.
Vector embed_interior(Index n_elements, const std::vector<Index>& interior, const Vector& values,
                      double background = 1.0);

struct EitSetup {
    DiskMesh unit_mesh;
    std::vector<Index> interior;
    Electrodes electrodes;
    DenseMatrix frame;
};

EitSetup make_eit_setup(int refinement, const Electrodes& electrodes, double interior_radius = 0.9);

/// Draw j: shape from draw_random_shape, conductivity from the prior, both
/// keyed on seed + j; M_j = F_{w_j}(sigma_j) - F_ref(sigma_j).
bae::ErrorSample eit_error_sample(Index L_draws, std::uint64_t seed, const priors::SigmoidFieldPrior& prior,
                                  const EitSetup& setup, const ShapeParams& ref_shape);

struct GaussNewtonOptions {
    double reg_lambda = 5.0;
    double delta = 1.0;
    int n_iter = 3;
};

struct GaussNewtonResult {
    Vector x;  // log-conductivity on the interior elements
    std::vector<double> misfit_history;
};

/// Projected Tikhonov Gauss-Newton on the reference mesh. The forward map is
/// G(x) = F_0(exp(x)) with exterior elements fixed at 1.
GaussNewtonResult gauss_newton_eit(const Vector& V_data, const spotlight::Projector& proj, const Vector& mu,
                                   const DiskMesh& ref_mesh, const EitSetup& setup,
                                   const GaussNewtonOptions& opts = {});

/// Smooth inclusion on the unit disk:
/// sigma0 + (sigma1 - sigma0) exp(-d^2 / (2 width^2)) at element centroids.
struct Inclusion {
    double cx = 0.3;
    double cy = 0.2;
    double width = 0.15;
    double sigma0 = 1.0;
    double sigma1 = 3.0;
};

Vector inclusion_conductivity(const DiskMesh& unit_mesh, const Inclusion& inclusion);

struct EitData {
    Vector V;  // noisy, stacked pattern-major
    double noise_std = 0.0;
};

/// Voltages of the inclusion on the `shape`-deformed setup mesh plus white
/// noise with std noise_rel * (max V - min V).
EitData simulate_eit_data(const EitSetup& setup, const ShapeParams& shape, const Inclusion& inclusion,
                          double noise_rel, std::uint64_t seed);

/// Area-weighted |exp(x) - sigma_true| / |sigma_true| over the interior
/// elements, areas taken on `mesh`.
double conductivity_error(const EitSetup& setup, const DiskMesh& mesh, const Vector& x, const Vector& sigma_true);

void write_mesh(std::ostream& out, const DiskMesh& mesh);
DiskMesh read_mesh(std::istream& in);

}  // namespace modred::eit
