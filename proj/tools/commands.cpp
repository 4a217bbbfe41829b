#include "commands.hpp"

#include "modred/baecore.hpp"
#include "modred/eit.hpp"
#include "modred/io.hpp"
#include "modred/spotlight.hpp"
#include "modred/tomo.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace modred::cli {

namespace fs = std::filesystem;

namespace {

// Library preconditions on configured values surface as usage errors.
template <class F>
auto validated(F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

std::string join(const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ",";
        s += io::format_double(values[i]);
    }
    return s;
}

class Run {
public:
    Run(const Config& cfg, std::string command) : cfg_(cfg), out_(cfg.get("io.out")) {
        if (out_.empty()) throw UsageError("io.out must not be empty");
        fs::create_directories(out_);
        manifest_.set("command", std::move(command));
        for (const auto& [key, value] : cfg.values()) manifest_.set("config." + key, value);
    }

    io::Header& manifest() { return manifest_; }

    fs::path bundle(const std::string& name, const DenseMatrix& M, const io::Header& header) {
        const fs::path stem = out_ / name;
        io::write_matrix_bundle(stem, M, header);
        manifest_.set("output." + name, name + ".mrd1");
        return stem;
    }

    void pgm(const std::string& name, const DenseMatrix& picture, const io::PgmScaling& scaling) {
        io::write_pgm(out_ / (name + ".pgm"), picture, scaling);
        manifest_.set("output." + name + "_pgm", name + ".pgm");
        manifest_.set("pgm." + name + ".lo", scaling.lo);
        manifest_.set("pgm." + name + ".hi", scaling.hi);
    }

    void text(const std::string& file, const std::string& body) {
        io::atomic_write(out_ / file, body);
        manifest_.set("output." + file, file);
    }

    int finish() {
        io::atomic_write(out_ / "config.ini", cfg_.to_ini());
        manifest_.write(out_ / "manifest.txt");
        std::cout << "wrote " << (out_ / "manifest.txt").string() << "\n";
        return 0;
    }

private:
    const Config& cfg_;
    fs::path out_;
    io::Header manifest_;
};

const std::string& require_path(const Config& cfg, const std::string& key) {
    const std::string& p = cfg.get(key);
    if (p.empty()) throw UsageError("missing input: set " + key + " (or the matching --flag)");
    return p;
}

DenseMatrix to_image(const tomo::PixelGrid& grid, const Vector& v) {
    DenseMatrix M(grid.n_side, grid.n_side);
    for (Index iy = 0; iy < grid.n_side; ++iy)
        for (Index ix = 0; ix < grid.n_side; ++ix) M(iy, ix) = v(iy * grid.n_side + ix);
    return M;
}

Vector from_image(const tomo::PixelGrid& grid, const DenseMatrix& M) {
    if (M.rows() != grid.n_side || M.cols() != grid.n_side)
        throw std::runtime_error("image size does not match tomo.n_side");
    Vector v(grid.size());
    for (Index iy = 0; iy < grid.n_side; ++iy)
        for (Index ix = 0; ix < grid.n_side; ++ix) v(iy * grid.n_side + ix) = M(iy, ix);
    return v;
}

tomo::TomoSetup tomo_setup(const Config& cfg) {
    tomo::FanBeamGeometry g;
    g.n_angles = cfg.get_int("tomo.n_angles");
    g.n_rays = cfg.get_int("tomo.n_rays");
    g.source_radius = cfg.get_double("tomo.source_radius");
    g.detector_radius = cfg.get_double("tomo.detector_radius");
    g.fov_radius = cfg.get_double("tomo.fov_radius");
    return validated([&] {
        return tomo::make_tomo_setup(cfg.get_int("tomo.n_side"), g, cfg.get_int("tomo.region"),
                                     cfg.get_int("tomo.block"));
    });
}

eit::EitSetup eit_setup(const Config& cfg) {
    return validated([&] {
        const auto el = eit::equispaced_electrodes(cfg.get_int("eit.electrodes"), cfg.get_double("eit.coverage"),
                                                   cfg.get_double("eit.z"));
        return eit::make_eit_setup(static_cast<int>(cfg.get_int("eit.refinement")), el,
                                   cfg.get_double("eit.interior_radius"));
    });
}

eit::Inclusion inclusion_from(const Config& cfg) {
    eit::Inclusion inc;
    inc.cx = cfg.get_double("eit.inclusion_x");
    inc.cy = cfg.get_double("eit.inclusion_y");
    inc.width = cfg.get_double("eit.inclusion_width");
    inc.sigma0 = cfg.get_double("eit.sigma0");
    inc.sigma1 = cfg.get_double("eit.sigma1");
    return inc;
}

std::uint64_t seed_of(const Config& cfg, const std::string& key) {
    const long long s = cfg.get_int(key);
    if (s < 0) throw UsageError(key + " must be non-negative");
    return static_cast<std::uint64_t>(s);
}

void record_diagnostics(io::Header& m, const spotlight::ClutterDiagnostics& d, Index rank) {
    m.set("projector.rank", static_cast<long long>(rank));
    m.set("projector.suggested_k", static_cast<long long>(d.suggested_k));
    m.set("projector.warnings", static_cast<long long>(d.warnings.size()));
    for (std::size_t i = 0; i < d.warnings.size(); ++i) m.set("projector.warning." + std::to_string(i), d.warnings[i]);
}

}  // namespace

int tomo_simulate(const Config& cfg) {
    Run run(cfg, "tomo-simulate");
    const tomo::TomoSetup s = tomo_setup(cfg);
    const Vector x = tomo::lotus_phantom(s.grid);
    const double noise_rel = cfg.get_double("tomo.noise_rel");
    if (!(noise_rel >= 0.0)) throw UsageError("tomo.noise_rel must be >= 0");
    const tomo::Sinogram sino = tomo::simulate_sinogram(s.fine, s.geom, x, noise_rel, seed_of(cfg, "tomo.seed"));

    io::Header ph;
    ph.set("format", "image");
    ph.set("n_side", static_cast<long long>(s.grid.n_side));
    run.bundle("phantom", to_image(s.grid, x), ph);
    run.pgm("phantom", tomo::as_picture(s.grid, x), {cfg.get_double("tomo.pgm_lo"), cfg.get_double("tomo.pgm_hi")});
    tomo::write_sinogram(fs::path(cfg.get("io.out")) / "sinogram", sino);
    run.manifest().set("output.sinogram", "sinogram.mrd1");

    const double m = static_cast<double>(sino.data.size());
    run.manifest().set("noise_std", *sino.noise_std);
    run.manifest().set("noise_norm", *sino.noise_std * std::sqrt(m));
    run.manifest().set("rays", static_cast<long long>(sino.data.size()));
    return run.finish();
}

int bae_sample(const Config& cfg) {
    Run run(cfg, "bae-sample");
    const std::string kind = cfg.get("io.experiment");
    io::Header h;
    h.set("experiment", kind);
    h.set("generator", "mt19937_64 seeded seed+j per draw");
    bae::ErrorSample sample;
    if (kind == "tomo") {
        const tomo::TomoSetup s = tomo_setup(cfg);
        const priors::SigmoidParams params{cfg.get_double("prior.xi0"), cfg.get_double("prior.alpha"),
                                           cfg.get_double("prior.gamma")};
        const auto prior = validated([&] { return tomo::make_tomo_prior(s.grid, cfg.get_double("prior.lambda"), params); });
        const Index L = cfg.get_int("prior.draws");
        if (L < 1) throw UsageError("prior.draws must be >= 1");
        const std::uint64_t seed = seed_of(cfg, "prior.seed");
        sample = tomo::sample_coarsening_error(s.fine, s.coarse, s.map, prior, L, seed);
        h.set("seed", static_cast<long long>(seed));
        h.set("prior", "sigmoid-gaussian lambda=" + cfg.get("prior.lambda") + " alpha=" + cfg.get("prior.alpha") +
                           " xi0=" + cfg.get("prior.xi0") + " gamma=" + cfg.get("prior.gamma"));
        h.set("n_side", static_cast<long long>(s.grid.n_side));
        h.set("region", cfg.get("tomo.region"));
        h.set("block", cfg.get("tomo.block"));
    } else if (kind == "eit") {
        const eit::EitSetup s = eit_setup(cfg);
        const auto prior = validated([&] {
            return eit::make_eit_prior(s.unit_mesh, s.interior, cfg.get_double("eit.prior_lambda"),
                                       cfg.get_double("eit.prior_alpha"), cfg.get_double("eit.prior_gamma"));
        });
        const Index L = cfg.get_int("eit.draws");
        if (L < 1) throw UsageError("eit.draws must be >= 1");
        const std::uint64_t seed = seed_of(cfg, "eit.sample_seed");
        sample = eit::eit_error_sample(L, seed, prior, s, eit::standard_shape());
        h.set("seed", static_cast<long long>(seed));
        h.set("prior", "sigmoid-gaussian lambda=" + cfg.get("eit.prior_lambda") + " alpha=" +
                           cfg.get("eit.prior_alpha") + " gamma=" + cfg.get("eit.prior_gamma"));
        h.set("refinement", cfg.get("eit.refinement"));
        h.set("electrodes", cfg.get("eit.electrodes"));
    } else {
        throw UsageError("io.experiment must be tomo or eit, got '" + kind + "'");
    }
    h.set("L", static_cast<long long>(sample.count()));
    h.set("m", static_cast<long long>(sample.dim()));
    run.bundle("errors", sample.draws, h);
    run.manifest().set("sample.L", static_cast<long long>(sample.count()));
    run.manifest().set("sample.m", static_cast<long long>(sample.dim()));
    run.manifest().set("sample.mean_norm", sample.draws.rowwise().mean().norm());
    return run.finish();
}

int spotlight_basis(const Config& cfg) {
    Run run(cfg, "spotlight-basis");
    auto [draws, sh] = io::read_matrix_bundle(require_path(cfg, "io.sample"));
    bae::ErrorSample sample{std::move(draws)};
    const long long requested = cfg.get_int("solver.rank");
    if (requested < 0 || requested > sample.count()) throw UsageError("solver.rank must be in [0, L]; 0 means L");
    const Index k = requested == 0 ? sample.count() : requested;
    double noise_norm = 0.0;
    if (cfg.is_set("io.sinogram")) {
        const tomo::Sinogram sino = tomo::read_sinogram(cfg.get("io.sinogram"));
        if (sino.noise_std) noise_norm = *sino.noise_std * std::sqrt(static_cast<double>(sino.data.size()));
    }
    const spotlight::ProjectorResult pr = spotlight::projector_from_error_sample(sample, k, noise_norm);
    io::Header h;
    h.set("format", "projector-basis");
    h.set("requested_k", static_cast<long long>(k));
    h.set("rank", static_cast<long long>(pr.projector.rank()));
    if (sh.has("experiment")) h.set("experiment", sh.get("experiment"));
    run.bundle("projector", pr.projector.basis(), h);

    const auto& d = pr.diagnostics;
    io::Header dh;
    dh.set("format", "clutter-spectrum");
    dh.set("suggested_k", static_cast<long long>(d.suggested_k));
    dh.set("noise_norm", noise_norm);
    run.bundle("spectrum", DenseMatrix(d.lambdas), dh);
    run.bundle("tail", DenseMatrix(d.tail), dh);
    record_diagnostics(run.manifest(), d, pr.projector.rank());
    for (const auto& w : d.warnings) std::cerr << "warning: " << w << "\n";
    return run.finish();
}

int tomo_reconstruct(const Config& cfg) {
    Run run(cfg, "tomo-reconstruct");
    const tomo::Method method = validated([&] { return tomo::parse_method(cfg.get("solver.method")); });
    const tomo::TomoSetup s = tomo_setup(cfg);
    const tomo::Sinogram sino = tomo::read_sinogram(require_path(cfg, "io.sinogram"));
    if (sino.data.rows() != s.geom.n_angles || sino.data.cols() != s.geom.n_rays)
        throw UsageError("sinogram is " + std::to_string(sino.data.rows()) + "x" + std::to_string(sino.data.cols()) +
                         " but the configured geometry is " + cfg.get("tomo.n_angles") + "x" + cfg.get("tomo.n_rays"));
    const Vector b = sino.stacked();
    double sigma = 0.0;
    if (sino.noise_std) {
        sigma = *sino.noise_std;
        run.manifest().set("noise_source", "header");
    } else {
        sigma = tomo::estimate_noise_from_air(sino, s.fine);
        run.manifest().set("noise_source", "air-rays");
    }
    const double noise_norm = sigma * std::sqrt(static_cast<double>(b.size()));

    tomo::ReconstructionInputs in;
    in.fine_matrix = &s.fine;
    in.coarse_matrix = &s.coarse;
    in.map = &s.map;
    in.data = b;
    in.noise_norm = noise_norm;
    in.tau = cfg.get_double("solver.tau");
    in.max_iter = static_cast<int>(cfg.get_int("solver.max_iter"));
    if (!(in.tau >= 1.0)) throw UsageError("solver.tau must be >= 1");
    if (in.max_iter < 1) throw UsageError("solver.max_iter must be >= 1");

    const tomo::Reconstruction fine = tomo::tomo_reconstruct(tomo::Method::fine, in);
    const Vector reference = tomo::restrict_image(s.map, fine.image);
    in.reference = &reference;

    std::optional<bae::ErrorModel> model;
    std::optional<spotlight::Projector> projector;
    if (method == tomo::Method::bae || method == tomo::Method::spotlight) {
        auto [draws, sh] = io::read_matrix_bundle(require_path(cfg, "io.sample"));
        if (draws.rows() != b.size()) throw UsageError("error sample length does not match the sinogram");
        bae::ErrorSample sample{std::move(draws)};
        model = bae::error_statistics(sample, sigma);
        in.error_model = &*model;
        if (method == tomo::Method::spotlight) {
            if (cfg.is_set("io.projector")) {
                projector.emplace(io::read_matrix_bundle(cfg.get("io.projector")).first);
            } else {
                const long long requested = cfg.get_int("solver.rank");
                if (requested < 0 || requested > sample.count()) throw UsageError("solver.rank must be in [0, L]");
                auto pr = spotlight::projector_from_error_sample(sample, requested == 0 ? sample.count() : requested,
                                                                 noise_norm);
                record_diagnostics(run.manifest(), pr.diagnostics, pr.projector.rank());
                projector.emplace(std::move(pr.projector));
            }
            if (projector->dim() != b.size()) throw UsageError("projector dimension does not match the sinogram");
            in.projector = &*projector;
        }
    }

    const tomo::Reconstruction rec = method == tomo::Method::fine ? fine : tomo::tomo_reconstruct(method, in);
    const Vector fine_image = method == tomo::Method::fine ? rec.image : tomo::prolong_image(s.map, rec.image);
    const std::string name = "image_" + tomo::to_string(method);
    io::Header ih;
    ih.set("format", "image");
    ih.set("method", tomo::to_string(method));
    ih.set("n_side", static_cast<long long>(s.grid.n_side));
    run.bundle(name, to_image(s.grid, fine_image), ih);
    run.pgm(name, tomo::as_picture(s.grid, fine_image), {cfg.get_double("tomo.pgm_lo"), cfg.get_double("tomo.pgm_hi")});

    auto& m = run.manifest();
    const auto& d = rec.diagnostics;
    m.set("method", tomo::to_string(method));
    m.set("noise_std", sigma);
    m.set("noise_norm", noise_norm);
    m.set("target", in.tau * noise_norm);
    m.set("iterations", static_cast<long long>(d.iterations));
    m.set("stop_reason", to_string(d.reason));
    m.set("final_discrepancy", d.final_discrepancy);
    m.set("discrepancy_history", join(d.discrepancy_history));
    if (d.region_error) m.set("region_error_vs_reference", *d.region_error);
    if (d.total_error) m.set("total_error_vs_reference", *d.total_error);
    m.set("reference.iterations", static_cast<long long>(fine.diagnostics.iterations));
    if (cfg.is_set("io.phantom")) {
        const Vector truth = from_image(s.grid, io::read_matrix_bundle(cfg.get("io.phantom")).first);
        const Vector coarse = method == tomo::Method::fine ? tomo::restrict_image(s.map, rec.image) : rec.image;
        m.set("region_error_vs_phantom", tomo::region_relative_error(s.map, coarse, tomo::restrict_image(s.map, truth)));
    }
    return run.finish();
}

int eit_simulate(const Config& cfg) {
    Run run(cfg, "eit-simulate");
    const eit::EitSetup s = eit_setup(cfg);
    const eit::ShapeParams shape = eit::draw_random_shape(seed_of(cfg, "eit.shape_seed"));
    const eit::Inclusion inc = inclusion_from(cfg);
    const double noise_rel = cfg.get_double("eit.noise_rel");
    if (!(noise_rel >= 0.0)) throw UsageError("eit.noise_rel must be >= 0");
    const eit::EitData data =
        validated([&] { return eit::simulate_eit_data(s, shape, inc, noise_rel, seed_of(cfg, "eit.seed")); });

    const Index L = s.electrodes.count();
    io::Header h;
    h.set("format", "eit-voltages");
    h.set("L", static_cast<long long>(L));
    h.set("frame", "pairwise e_k - e_L, k = 1..L-1; column k is pattern k");
    h.set("noise_std", data.noise_std);
    h.set("refinement", cfg.get("eit.refinement"));
    h.set("shape.a_c", shape.a_c);
    h.set("shape.a_s", shape.a_s);
    h.set("shape.x_scale", shape.x_scale);
    h.set("inclusion.x", inc.cx);
    h.set("inclusion.y", inc.cy);
    h.set("inclusion.width", inc.width);
    h.set("inclusion.sigma0", inc.sigma0);
    h.set("inclusion.sigma1", inc.sigma1);
    run.bundle("voltages", Eigen::Map<const DenseMatrix>(data.V.data(), L, L - 1), h);

    std::ostringstream mesh;
    eit::write_mesh(mesh, eit::deform_mesh(s.unit_mesh, eit::standard_shape()));
    run.text("reference_mesh.txt", mesh.str());
    io::Header th;
    th.set("format", "element-conductivity");
    run.bundle("truth", DenseMatrix(eit::inclusion_conductivity(s.unit_mesh, inc)), th);

    run.manifest().set("noise_std", data.noise_std);
    run.manifest().set("shape.a_c", shape.a_c);
    run.manifest().set("shape.a_s", shape.a_s);
    run.manifest().set("m", static_cast<long long>(data.V.size()));
    return run.finish();
}

int eit_reconstruct(const Config& cfg) {
    Run run(cfg, "eit-reconstruct");
    const eit::EitSetup s = eit_setup(cfg);
    auto [U, dh] = io::read_matrix_bundle(require_path(cfg, "io.data"));
    const Index L = s.electrodes.count();
    if (U.rows() != L || U.cols() != L - 1)
        throw UsageError("voltage data must be L x (L-1) with L = eit.electrodes");
    const Vector V = Eigen::Map<const Vector>(U.data(), U.size());
    const eit::DiskMesh ref_mesh = eit::deform_mesh(s.unit_mesh, eit::standard_shape());

    spotlight::Projector proj = spotlight::Projector::empty(V.size());
    Vector mu = Vector::Zero(V.size());
    std::string label = "unprojected";
    if (cfg.is_set("io.sample")) {
        auto [draws, sh] = io::read_matrix_bundle(cfg.get("io.sample"));
        if (draws.rows() != V.size()) throw UsageError("error sample length does not match the voltage data");
        bae::ErrorSample sample{std::move(draws)};
        const long long requested = cfg.get_int("solver.rank");
        if (requested < 0 || requested > sample.count()) throw UsageError("solver.rank must be in [0, L]");
        auto pr = spotlight::projector_from_error_sample(sample, requested == 0 ? sample.count() : requested);
        record_diagnostics(run.manifest(), pr.diagnostics, pr.projector.rank());
        proj = std::move(pr.projector);
        mu = sample.draws.rowwise().mean();
        label = "projected";
    }
    eit::GaussNewtonOptions opts;
    opts.delta = cfg.get_double("eit.delta");
    opts.reg_lambda = cfg.get_double("eit.reg_lambda");
    opts.n_iter = static_cast<int>(cfg.get_int("eit.gn_iter"));
    const eit::GaussNewtonResult res = validated([&] { return eit::gauss_newton_eit(V, proj, mu, ref_mesh, s, opts); });

    const Vector sigma =
        eit::embed_interior(s.unit_mesh.element_count(), s.interior, res.x.array().exp().matrix(), 1.0);
    io::Header ch;
    ch.set("format", "element-conductivity");
    ch.set("method", label);
    run.bundle("conductivity_" + label, DenseMatrix(sigma), ch);

    auto& m = run.manifest();
    m.set("method", label);
    m.set("misfit_history", join(res.misfit_history));
    if (dh.has("inclusion.x")) {
        eit::Inclusion inc;
        inc.cx = dh.get_double("inclusion.x");
        inc.cy = dh.get_double("inclusion.y");
        inc.width = dh.get_double("inclusion.width");
        inc.sigma0 = dh.get_double("inclusion.sigma0");
        inc.sigma1 = dh.get_double("inclusion.sigma1");
        m.set("error_vs_truth",
              eit::conductivity_error(s, ref_mesh, res.x, eit::inclusion_conductivity(s.unit_mesh, inc)));
    }
    return run.finish();
}

}  // namespace modred::cli
