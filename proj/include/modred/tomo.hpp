#pragma once

#include "modred/baecore.hpp"
#include "modred/numkit.hpp"
#include "modred/priors.hpp"
#include "modred/spotlight.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace modred::tomo {

/// n_side x n_side pixels on the unit square. Pixel (ix, iy) covers
/// [ix/n, (ix+1)/n] x [iy/n, (iy+1)/n] and has index iy * n_side + ix.
struct PixelGrid {
    Index n_side = 2;

    Index size() const { return n_side * n_side; }
    double pixel_width() const { return 1.0 / static_cast<double>(n_side); }
    void validate() const;
};

/// Half-open fine-pixel ranges: rows are iy, cols are ix.
struct SpotlightRegion {
    Index row_begin = 0;
    Index row_end = 0;
    Index col_begin = 0;
    Index col_end = 0;

    Index size() const { return (row_end - row_begin) * (col_end - col_begin); }
    bool contains(Index ix, Index iy) const {
        return iy >= row_begin && iy < row_end && ix >= col_begin && ix < col_end;
    }
    /// Centered square region of the given side.
    static SpotlightRegion centered(const PixelGrid& grid, Index side);
};

/// Fine-to-coarse aggregation. Coarse pixels 0..d-1 are the region pixels in
/// fine index order; the lumped blocks follow in block row-major order.
struct CoarseMap {
    SparseMatrix P;  // n x N, 0/1
    Vector weights;  // diag(W): fine pixels per coarse pixel
    Index region_size = 0;

    Index coarse_size() const { return P.rows(); }
    Index fine_size() const { return P.cols(); }
};

CoarseMap build_coarsening(const PixelGrid& grid, const SpotlightRegion& region, Index block);

/// W^-1 P x: block means outside the region, identity inside.
Vector restrict_image(const CoarseMap& map, const Vector& fine);
/// P^T x: coarse values copied onto their fine pixels.
Vector prolong_image(const CoarseMap& map, const Vector& coarse);

struct FanBeamGeometry {
    Index n_angles = 60;
    Index n_rays = 95;
    double source_radius = 2.0;    // distance from the square's center
    double detector_radius = 2.0;  // center to flat detector
    double fov_radius = 0.75;      // fan covers a disc of this radius around the center

    Index ray_count() const { return n_angles * n_rays; }
    void validate() const;
};

struct Ray {
    double sx, sy;  // source
    double dx, dy;  // detector point
};

/// Ray l = angle * n_rays + bin. Sources sit on a circle of source_radius
/// around (0.5, 0.5) at angles 2 pi a / n_angles.
Ray fanbeam_ray(const FanBeamGeometry& geom, Index ray_index);

/// Siddon-style parametric traversal: entry (l, j) is the length of ray l
/// inside pixel j.
SparseMatrix build_fanbeam_matrix(const PixelGrid& grid, const FanBeamGeometry& geom);

/// A^N P^T.
SparseMatrix coarse_matrix(const SparseMatrix& fine, const CoarseMap& map);

struct Sinogram {
    DenseMatrix data;  // n_angles x n_rays
    std::optional<double> noise_std;

    Vector stacked() const;  // angle-major, matching the system matrix rows
};

Sinogram simulate_sinogram(const SparseMatrix& system, const FanBeamGeometry& geom, const Vector& image,
                           double noise_rel, std::uint64_t seed);

/// Header (n_angles, n_rays, noise_std when known) at <stem>.hdr, data at
/// <stem>.mrd1 as an n_angles x n_rays matrix.
void write_sinogram(const std::filesystem::path& stem, const Sinogram& sino);
Sinogram read_sinogram(const std::filesystem::path& stem);

/// Sample std over "air" rays: rays with no system-matrix weight on the
/// support mask (or, without a mask, rays missing the square).
double estimate_noise_from_air(const Sinogram& sino, const SparseMatrix& system,
                               const std::vector<bool>* support = nullptr);

/// Piecewise-constant cross-section made of discs and annuli, area-averaged
/// over `supersample`^2 points per pixel.
Vector lotus_phantom(const PixelGrid& grid, int supersample = 4);

/// Fine pixels that any lotus_phantom feature touches.
std::vector<bool> lotus_support(const PixelGrid& grid);

/// Sigmoid-Gaussian prior on the fine grid.
priors::SigmoidFieldPrior make_tomo_prior(const PixelGrid& grid, double lambda, priors::SigmoidParams params);

/// m_j = A^N x_j - A^n W^-1 P x_j with x_j drawn from the prior (seed + j).
bae::ErrorSample sample_coarsening_error(const SparseMatrix& fine, const SparseMatrix& coarse,
                                         const CoarseMap& map, const priors::SigmoidFieldPrior& prior,
                                         Index L, std::uint64_t seed);

enum class Method { fine, naive, bae, spotlight };

Method parse_method(const std::string& name);
std::string to_string(Method method);

struct ReconstructionInputs {
    const SparseMatrix* fine_matrix = nullptr;    // fine
    const SparseMatrix* coarse_matrix = nullptr;  // naive, bae, spotlight
    const CoarseMap* map = nullptr;               // region error
    Vector data;
    double noise_norm = 0.0;
    double tau = 1.0;
    int max_iter = 2000;
    const bae::ErrorModel* error_model = nullptr;     // bae; spotlight mean
    const spotlight::Projector* projector = nullptr;  // spotlight
    const Vector* reference = nullptr;                // coarse-grid reference image
};

struct ReconstructionDiagnostics {
    int iterations = 0;
    StopReason reason = StopReason::max_iter;
    double final_discrepancy = 0.0;
    std::vector<double> discrepancy_history;
    std::optional<double> region_error;  // relative L2 error inside the spotlight region
    std::optional<double> total_error;   // relative L2 error on the coarse grid
};

struct Reconstruction {
    Vector image;  // fine grid for Method::fine, coarse grid otherwise
    ReconstructionDiagnostics diagnostics;
};

Reconstruction tomo_reconstruct(Method method, const ReconstructionInputs& in);

/// |x_R - ref_R| / |ref_R| over the first region_size coarse pixels.
double region_relative_error(const CoarseMap& map, const Vector& coarse, const Vector& reference);

/// Grid, geometry, coarsening and both system matrices for one experiment.
struct TomoSetup {
    PixelGrid grid;
    FanBeamGeometry geom;
    SpotlightRegion region;
    CoarseMap map;
    SparseMatrix fine;
    SparseMatrix coarse;
};

TomoSetup make_tomo_setup(Index n_side, const FanBeamGeometry& geom, Index region_side, Index block);

/// Row-major n_side x n_side picture, top row = largest y.
DenseMatrix as_picture(const PixelGrid& grid, const Vector& fine);

}  // namespace modred::tomo
