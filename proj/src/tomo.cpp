#include "modred/tomo.hpp"

#include "modred/io.hpp"
#include "modred/parallel.hpp"
#include "modred/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace modred::tomo {

using Triplet = Eigen::Triplet<double>;

void PixelGrid::validate() const {
    if (n_side < 2) throw std::invalid_argument("PixelGrid: n_side must be >= 2");
}

SpotlightRegion SpotlightRegion::centered(const PixelGrid& grid, Index side) {
    if (side <= 0 || side > grid.n_side || (grid.n_side - side) % 2 != 0)
        throw std::invalid_argument("SpotlightRegion::centered: side must fit symmetrically");
    const Index begin = (grid.n_side - side) / 2;
    return {begin, begin + side, begin, begin + side};
}

CoarseMap build_coarsening(const PixelGrid& grid, const SpotlightRegion& region, Index block) {
    grid.validate();
    const Index n = grid.n_side;
    if (block < 1 || n % block != 0) throw std::invalid_argument("build_coarsening: block must divide n_side");
    if (region.row_begin < 0 || region.col_begin < 0 || region.row_end > n || region.col_end > n ||
        region.row_begin > region.row_end || region.col_begin > region.col_end)
        throw std::invalid_argument("build_coarsening: region outside the grid");
    for (Index edge : {region.row_begin, region.row_end, region.col_begin, region.col_end})
        if (edge % block != 0)
            throw std::invalid_argument("build_coarsening: region not aligned to the block size");

    const Index nb = n / block;
    std::vector<Index> coarse_of(static_cast<std::size_t>(grid.size()), -1);
    Index next = 0;
    for (Index iy = 0; iy < n; ++iy)
        for (Index ix = 0; ix < n; ++ix)
            if (region.contains(ix, iy)) coarse_of[iy * n + ix] = next++;
    const Index region_size = next;
    for (Index by = 0; by < nb; ++by)
        for (Index bx = 0; bx < nb; ++bx) {
            bool any = false;
            for (Index iy = by * block; iy < (by + 1) * block; ++iy)
                for (Index ix = bx * block; ix < (bx + 1) * block; ++ix)
                    if (!region.contains(ix, iy)) {
                        coarse_of[iy * n + ix] = next;
                        any = true;
                    }
            if (any) ++next;
        }

    CoarseMap map;
    map.region_size = region_size;
    std::vector<Triplet> trips;
    trips.reserve(coarse_of.size());
    for (Index j = 0; j < grid.size(); ++j) trips.emplace_back(coarse_of[j], j, 1.0);
    map.P.resize(next, grid.size());
    map.P.setFromTriplets(trips.begin(), trips.end());
    map.P.makeCompressed();
    map.weights = Vector::Zero(next);
    for (Index j = 0; j < grid.size(); ++j) map.weights(coarse_of[j]) += 1.0;
    return map;
}

Vector restrict_image(const CoarseMap& map, const Vector& fine) {
    if (fine.size() != map.fine_size()) throw std::invalid_argument("restrict_image: wrong image size");
    return (map.P * fine).cwiseQuotient(map.weights);
}

Vector prolong_image(const CoarseMap& map, const Vector& coarse) {
    if (coarse.size() != map.coarse_size()) throw std::invalid_argument("prolong_image: wrong image size");
    return map.P.transpose() * coarse;
}

void FanBeamGeometry::validate() const {
    if (n_angles < 1 || n_rays < 1) throw std::invalid_argument("FanBeamGeometry: need rays and angles");
    const double circumradius = std::sqrt(0.5);
    if (!(source_radius > circumradius))
        throw std::invalid_argument("FanBeamGeometry: source must lie outside the circumscribed circle");
    if (!(fov_radius > 0.0) || !(fov_radius < source_radius))
        throw std::invalid_argument("FanBeamGeometry: fov radius must be in (0, source_radius)");
    if (!(detector_radius > 0.0)) throw std::invalid_argument("FanBeamGeometry: detector radius must be positive");
}

Ray fanbeam_ray(const FanBeamGeometry& geom, Index ray_index) {
    const Index a = ray_index / geom.n_rays;
    const Index j = ray_index % geom.n_rays;
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(a) / static_cast<double>(geom.n_angles);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double half_angle = std::asin(geom.fov_radius / geom.source_radius);
    const double half_width = (geom.source_radius + geom.detector_radius) * std::tan(half_angle);
    const double offset =
        -half_width + (static_cast<double>(j) + 0.5) * (2.0 * half_width / static_cast<double>(geom.n_rays));
    Ray ray{};
    ray.sx = 0.5 + geom.source_radius * c;
    ray.sy = 0.5 + geom.source_radius * s;
    ray.dx = 0.5 - geom.detector_radius * c - offset * s;
    ray.dy = 0.5 - geom.detector_radius * s + offset * c;
    return ray;
}

namespace {

// Parametric clip of p(t) = s + t (d - s) against [0,1] along one axis.
bool clip_axis(double s, double d, double& tmin, double& tmax) {
    const double delta = d - s;
    if (delta == 0.0) return s >= 0.0 && s <= 1.0;
    double t0 = (0.0 - s) / delta;
    double t1 = (1.0 - s) / delta;
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    return true;
}

void trace_ray(const Ray& ray, Index n, std::vector<std::pair<Index, double>>& out) {
    out.clear();
    double tmin = 0.0;
    double tmax = 1.0;
    if (!clip_axis(ray.sx, ray.dx, tmin, tmax) || !clip_axis(ray.sy, ray.dy, tmin, tmax)) return;
    if (!(tmax > tmin)) return;

    const double ddx = ray.dx - ray.sx;
    const double ddy = ray.dy - ray.sy;
    const double length = std::hypot(ddx, ddy);
    const double nd = static_cast<double>(n);

    std::vector<double> ts;
    ts.reserve(static_cast<std::size_t>(2 * n + 2));
    ts.push_back(tmin);
    ts.push_back(tmax);
    auto crossings = [&](double s, double delta) {
        if (delta == 0.0) return;
        for (Index i = 0; i <= n; ++i) {
            const double t = (static_cast<double>(i) / nd - s) / delta;
            if (t > tmin && t < tmax) ts.push_back(t);
        }
    };
    crossings(ray.sx, ddx);
    crossings(ray.sy, ddy);
    std::sort(ts.begin(), ts.end());

    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const double dt = ts[k + 1] - ts[k];
        if (!(dt > 1e-14)) continue;
        const double tm = 0.5 * (ts[k] + ts[k + 1]);
        const Index ix = std::clamp<Index>(static_cast<Index>(std::floor((ray.sx + tm * ddx) * nd)), 0, n - 1);
        const Index iy = std::clamp<Index>(static_cast<Index>(std::floor((ray.sy + tm * ddy) * nd)), 0, n - 1);
        const Index pixel = iy * n + ix;
        if (!out.empty() && out.back().first == pixel) out.back().second += dt * length;
        else out.emplace_back(pixel, dt * length);
    }
}

}  // namespace

SparseMatrix build_fanbeam_matrix(const PixelGrid& grid, const FanBeamGeometry& geom) {
    grid.validate();
    geom.validate();
    const Index m = geom.ray_count();
    std::vector<std::vector<std::pair<Index, double>>> rows(static_cast<std::size_t>(m));
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t l) {
        std::vector<std::pair<Index, double>> row;
        trace_ray(fanbeam_ray(geom, static_cast<Index>(l)), grid.n_side, row);
        rows[l] = std::move(row);
    });
    std::vector<Triplet> trips;
    for (Index l = 0; l < m; ++l)
        for (const auto& [j, v] : rows[l]) trips.emplace_back(l, j, v);
    SparseMatrix A(m, grid.size());
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    return A;
}

SparseMatrix coarse_matrix(const SparseMatrix& fine, const CoarseMap& map) {
    if (fine.cols() != map.fine_size()) throw std::invalid_argument("coarse_matrix: dimension mismatch");
    SparseMatrix out = fine * SparseMatrix(map.P.transpose());
    out.makeCompressed();
    return out;
}

Vector Sinogram::stacked() const {
    Vector v(data.size());
    for (Index a = 0; a < data.rows(); ++a) v.segment(a * data.cols(), data.cols()) = data.row(a).transpose();
    return v;
}

Sinogram simulate_sinogram(const SparseMatrix& system, const FanBeamGeometry& geom, const Vector& image,
                           double noise_rel, std::uint64_t seed) {
    if (image.size() != system.cols()) throw std::invalid_argument("simulate_sinogram: image size mismatch");
    if (system.rows() != geom.ray_count()) throw std::invalid_argument("simulate_sinogram: geometry mismatch");
    if (noise_rel < 0.0) throw std::invalid_argument("simulate_sinogram: negative noise level");
    Vector b = system * image;
    const double std_dev = noise_rel * b.cwiseAbs().maxCoeff();
    if (std_dev > 0.0) b += std_dev * standard_normal_vector(b.size(), seed);
    Sinogram sino;
    sino.noise_std = std_dev;
    sino.data.resize(geom.n_angles, geom.n_rays);
    for (Index a = 0; a < geom.n_angles; ++a)
        sino.data.row(a) = b.segment(a * geom.n_rays, geom.n_rays).transpose();
    return sino;
}

double estimate_noise_from_air(const Sinogram& sino, const SparseMatrix& system, const std::vector<bool>* support) {
    const Vector b = sino.stacked();
    if (b.size() != system.rows()) throw std::invalid_argument("estimate_noise_from_air: size mismatch");
    if (support && static_cast<Index>(support->size()) != system.cols())
        throw std::invalid_argument("estimate_noise_from_air: support mask size mismatch");
    std::vector<double> air;
    for (Index l = 0; l < system.rows(); ++l) {
        bool hits = false;
        for (SparseMatrix::InnerIterator it(system, l); it && !hits; ++it)
            if (it.value() > 0.0 && (!support || (*support)[static_cast<std::size_t>(it.col())])) hits = true;
        if (!hits) air.push_back(b(l));
    }
    if (air.size() < 10) {
        std::ostringstream msg;
        msg << "estimate_noise_from_air: only " << air.size() << " air rays (need >= 10)";
        throw std::runtime_error(msg.str());
    }
    return sample_std(air);
}

namespace {

struct Disc {
    double cx, cy, r;
};

struct PhantomLayout {
    double body_radius = 0.40;
    double rind_inner = 0.36;
    std::vector<Disc> holes;
    Disc inclusion{0.62, 0.44, 0.03};
};

PhantomLayout lotus_layout() {
    PhantomLayout layout;
    layout.holes.push_back({0.5, 0.5, 0.07});
    for (int k = 0; k < 7; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 7.0 + 0.3;
        layout.holes.push_back({0.5 + 0.2 * std::cos(a), 0.5 + 0.2 * std::sin(a), 0.055});
    }
    for (int k = 0; k < 9; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 9.0 + 0.1;
        layout.holes.push_back({0.5 + 0.305 * std::cos(a), 0.5 + 0.305 * std::sin(a), 0.03});
    }
    return layout;
}

double lotus_value(const PhantomLayout& layout, double x, double y) {
    const double r = std::hypot(x - 0.5, y - 0.5);
    if (r > layout.body_radius) return 0.0;
    for (const Disc& h : layout.holes)
        if (std::hypot(x - h.cx, y - h.cy) < h.r) return 0.0;
    if (std::hypot(x - layout.inclusion.cx, y - layout.inclusion.cy) < layout.inclusion.r) return 1.0;
    if (r > layout.rind_inner) return 1.0;
    return 0.6;
}

}  // namespace

Vector lotus_phantom(const PixelGrid& grid, int supersample) {
    grid.validate();
    if (supersample < 1) throw std::invalid_argument("lotus_phantom: supersample must be >= 1");
    const PhantomLayout layout = lotus_layout();
    const Index n = grid.n_side;
    const double h = grid.pixel_width();
    Vector img(grid.size());
    for (Index iy = 0; iy < n; ++iy)
        for (Index ix = 0; ix < n; ++ix) {
            double acc = 0.0;
            for (int sy = 0; sy < supersample; ++sy)
                for (int sx = 0; sx < supersample; ++sx) {
                    const double x = (static_cast<double>(ix) + (sx + 0.5) / supersample) * h;
                    const double y = (static_cast<double>(iy) + (sy + 0.5) / supersample) * h;
                    acc += lotus_value(layout, x, y);
                }
            img(iy * n + ix) = acc / (supersample * supersample);
        }
    return img;
}

std::vector<bool> lotus_support(const PixelGrid& grid) {
    grid.validate();
    const double radius = lotus_layout().body_radius;
    const Index n = grid.n_side;
    const double h = grid.pixel_width();
    std::vector<bool> mask(static_cast<std::size_t>(grid.size()));
    for (Index iy = 0; iy < n; ++iy)
        for (Index ix = 0; ix < n; ++ix) {
            const double nx = std::clamp(0.5, ix * h, (ix + 1) * h);
            const double ny = std::clamp(0.5, iy * h, (iy + 1) * h);
            mask[static_cast<std::size_t>(iy * n + ix)] = std::hypot(nx - 0.5, ny - 0.5) <= radius;
        }
    return mask;
}

priors::SigmoidFieldPrior make_tomo_prior(const PixelGrid& grid, double lambda, priors::SigmoidParams params) {
    grid.validate();
    return priors::SigmoidFieldPrior(
        priors::GaussianFieldPrior(priors::build_grid_laplacian(grid.n_side, grid.n_side), lambda), params);
}

bae::ErrorSample sample_coarsening_error(const SparseMatrix& fine, const SparseMatrix& coarse, const CoarseMap& map,
                                         const priors::SigmoidFieldPrior& prior, Index L, std::uint64_t seed) {
    if (prior.dim() != fine.cols() || coarse.cols() != map.coarse_size() || fine.rows() != coarse.rows())
        throw std::invalid_argument("sample_coarsening_error: dimension mismatch");
    auto f_star = [&fine](const Vector& x) -> Vector { return fine * x; };
    auto f = [&coarse](const Vector& z) -> Vector { return coarse * z; };
    auto sampler = [&](std::uint64_t s) {
        Vector x = prior.draw(s);
        Vector z = restrict_image(map, x);
        return std::make_pair(std::move(x), std::move(z));
    };
    return bae::sample_error(f_star, f, sampler, L, seed);
}

Method parse_method(const std::string& name) {
    if (name == "fine") return Method::fine;
    if (name == "naive") return Method::naive;
    if (name == "bae") return Method::bae;
    if (name == "spotlight") return Method::spotlight;
    throw std::invalid_argument("unknown reconstruction method '" + name + "'");
}

std::string to_string(Method method) {
    switch (method) {
        case Method::fine: return "fine";
        case Method::naive: return "naive";
        case Method::bae: return "bae";
        case Method::spotlight: return "spotlight";
    }
    return "unknown";
}

double region_relative_error(const CoarseMap& map, const Vector& coarse, const Vector& reference) {
    if (coarse.size() != map.coarse_size() || reference.size() != map.coarse_size())
        throw std::invalid_argument("region_relative_error: size mismatch");
    const Index d = map.region_size;
    const double denom = reference.head(d).norm();
    if (!(denom > 0.0)) throw std::invalid_argument("region_relative_error: reference vanishes on the region");
    return (coarse.head(d) - reference.head(d)).norm() / denom;
}

Reconstruction tomo_reconstruct(Method method, const ReconstructionInputs& in) {
    MorozovOptions lsqr_opts;
    lsqr_opts.noise_norm = in.noise_norm;
    lsqr_opts.tau = in.tau;
    lsqr_opts.max_iter = in.max_iter;

    Reconstruction out;
    auto take_lsqr = [&out](LsqrResult&& r) {
        out.image = std::move(r.x);
        out.diagnostics.iterations = r.iterations;
        out.diagnostics.reason = r.reason;
        out.diagnostics.final_discrepancy = r.residual_norm;
        out.diagnostics.discrepancy_history = std::move(r.residual_history);
    };
    auto require = [method](const void* p, const char* what) {
        if (!p) throw std::invalid_argument("tomo_reconstruct(" + to_string(method) + "): missing " + what);
    };

    switch (method) {
        case Method::fine:
            require(in.fine_matrix, "fine system matrix");
            take_lsqr(lsqr_morozov(LinearOperator::from_sparse(*in.fine_matrix), in.data, lsqr_opts));
            break;
        case Method::naive:
            require(in.coarse_matrix, "coarse system matrix");
            take_lsqr(lsqr_morozov(LinearOperator::from_sparse(*in.coarse_matrix), in.data, lsqr_opts));
            break;
        case Method::bae: {
            require(in.coarse_matrix, "coarse system matrix");
            require(in.error_model, "error model");
            bae::BaeSolveOptions opts;
            opts.noise_norm = in.noise_norm;
            opts.tau = in.tau;
            opts.max_iter = in.max_iter;
            bae::BaeSolveResult r =
                bae::bae_normal_solve(LinearOperator::from_sparse(*in.coarse_matrix), in.data, *in.error_model, opts);
            out.image = std::move(r.x);
            out.diagnostics.iterations = r.iterations;
            out.diagnostics.reason = r.reason;
            out.diagnostics.final_discrepancy = r.weighted_discrepancy;
            out.diagnostics.discrepancy_history = std::move(r.discrepancy_history);
            break;
        }
        case Method::spotlight: {
            require(in.coarse_matrix, "coarse system matrix");
            require(in.projector, "projector");
            const Vector mu = in.error_model ? in.error_model->mu : Vector::Zero(in.data.size());
            take_lsqr(spotlight::spotlight_solve(*in.projector, LinearOperator::from_sparse(*in.coarse_matrix),
                                                 in.data, mu, lsqr_opts));
            break;
        }
    }

    if (in.map && in.reference) {
        const Vector coarse = method == Method::fine ? restrict_image(*in.map, out.image) : out.image;
        out.diagnostics.region_error = region_relative_error(*in.map, coarse, *in.reference);
        out.diagnostics.total_error = (coarse - *in.reference).norm() / in.reference->norm();
    }
    return out;
}

void write_sinogram(const std::filesystem::path& stem, const Sinogram& sino) {
    io::Header h;
    h.set("format", "sinogram");
    h.set("n_angles", static_cast<long long>(sino.data.rows()));
    h.set("n_rays", static_cast<long long>(sino.data.cols()));
    if (sino.noise_std) h.set("noise_std", *sino.noise_std);
    io::write_matrix_bundle(stem, sino.data, h);
}

Sinogram read_sinogram(const std::filesystem::path& stem) {
    auto [data, h] = io::read_matrix_bundle(stem);
    if (h.has("n_angles") && h.get_int("n_angles") != data.rows())
        throw std::runtime_error("read_sinogram: header n_angles disagrees with the payload");
    if (h.has("n_rays") && h.get_int("n_rays") != data.cols())
        throw std::runtime_error("read_sinogram: header n_rays disagrees with the payload");
    Sinogram sino;
    sino.data = std::move(data);
    if (h.has("noise_std")) sino.noise_std = h.get_double("noise_std");
    return sino;
}

TomoSetup make_tomo_setup(Index n_side, const FanBeamGeometry& geom, Index region_side, Index block) {
    TomoSetup s;
    s.grid = PixelGrid{n_side};
    s.grid.validate();
    s.geom = geom;
    s.geom.validate();
    s.region = SpotlightRegion::centered(s.grid, region_side);
    s.map = build_coarsening(s.grid, s.region, block);
    s.fine = build_fanbeam_matrix(s.grid, s.geom);
    s.coarse = coarse_matrix(s.fine, s.map);
    return s;
}

DenseMatrix as_picture(const PixelGrid& grid, const Vector& fine) {
    if (fine.size() != grid.size()) throw std::invalid_argument("as_picture: size mismatch");
    const Index n = grid.n_side;
    DenseMatrix pic(n, n);
    for (Index iy = 0; iy < n; ++iy)
        for (Index ix = 0; ix < n; ++ix) pic(n - 1 - iy, ix) = fine(iy * n + ix);
    return pic;
}

}  // namespace modred::tomo
