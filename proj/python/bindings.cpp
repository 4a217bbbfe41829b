#include "modred/baecore.hpp"
#include "modred/eit.hpp"
#include "modred/io.hpp"
#include "modred/numkit.hpp"
#include "modred/parallel.hpp"
#include "modred/spotlight.hpp"
#include "modred/tomo.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <variant>

namespace py = pybind11;
using namespace modred;

namespace {

// numpy arrays and scipy CSR matrices both become operators.
using MatrixLike = std::variant<SparseMatrix, DenseMatrix>;

LinearOperator as_operator(const MatrixLike& A) {
    if (const auto* s = std::get_if<SparseMatrix>(&A)) return LinearOperator::from_sparse(*s);
    return LinearOperator::from_dense(std::get<DenseMatrix>(A));
}

BasisMethod parse_basis(const std::string& name) {
    if (name == "svd") return BasisMethod::svd;
    if (name == "qr") return BasisMethod::qr;
    throw std::invalid_argument("basis method must be 'svd' or 'qr'");
}

py::dict lsqr_dict(const LsqrResult& r) {
    py::dict d;
    d["x"] = r.x;
    d["residual_norm"] = r.residual_norm;
    d["iterations"] = r.iterations;
    d["reason"] = to_string(r.reason);
    d["residual_history"] = r.residual_history;
    return d;
}

py::dict diagnostics_dict(const spotlight::ClutterDiagnostics& diag) {
    py::dict d;
    d["lambdas"] = diag.lambdas;
    d["tail"] = diag.tail;
    d["suggested_k"] = diag.suggested_k;
    d["warnings"] = diag.warnings;
    return d;
}

}  // namespace

PYBIND11_MODULE(_modred, m) {
    m.doc() = "Model reduction for inverse problems: approximation-error models and spotlight inversion";

    m.def("set_thread_count", &set_thread_count, py::arg("count"));
    m.def("thread_count", &thread_count);

    // numkit
    m.def(
        "orthonormal_basis",
        [](const DenseMatrix& A, const std::string& method, double rel_tol) {
            return orthonormal_basis(A, parse_basis(method), rel_tol);
        },
        py::arg("A"), py::arg("method") = "svd", py::arg("rel_tol") = 1e-10);
    m.def(
        "lean_svd",
        [](const DenseMatrix& A) {
            const LeanSvd s = lean_svd(A);
            return py::make_tuple(s.U, s.d, s.V);
        },
        py::arg("A"));
    m.def(
        "lsqr_morozov",
        [](const MatrixLike& A, const Vector& b, double noise_norm, double tau, int max_iter) {
            MorozovOptions o;
            o.noise_norm = noise_norm;
            o.tau = tau;
            o.max_iter = max_iter;
            return lsqr_dict(lsqr_morozov(as_operator(A), b, o));
        },
        py::arg("A"), py::arg("b"), py::arg("noise_norm") = 0.0, py::arg("tau") = 1.0, py::arg("max_iter") = 1000);

    // baecore
    py::class_<bae::ErrorModel>(m, "ErrorModel")
        .def_readonly("mu", &bae::ErrorModel::mu)
        .def_readonly("S", &bae::ErrorModel::S)
        .def_readonly("sigma", &bae::ErrorModel::sigma);
    m.def(
        "error_statistics",
        [](const DenseMatrix& draws, double sigma) { return bae::error_statistics({draws}, sigma); },
        py::arg("draws"), py::arg("sigma"));
    m.def(
        "kl_expand",
        [](const bae::ErrorModel& model, double rel_tol) {
            const bae::KLExpansion kl = bae::kl_expand(model, rel_tol);
            return py::make_tuple(kl.lambdas, kl.U);
        },
        py::arg("model"), py::arg("rel_tol") = 1e-10);
    m.def("smw_whitener", &bae::smw_whitener, py::arg("model"));
    m.def(
        "bae_solve",
        [](const MatrixLike& A, const Vector& b, const bae::ErrorModel& model, double noise_norm, double tau,
           int max_iter) {
            bae::BaeSolveOptions o;
            o.noise_norm = noise_norm;
            o.tau = tau;
            o.max_iter = max_iter;
            const bae::BaeSolveResult r = bae::bae_normal_solve(as_operator(A), b, model, o);
            py::dict d;
            d["x"] = r.x;
            d["iterations"] = r.iterations;
            d["reason"] = to_string(r.reason);
            d["weighted_discrepancy"] = r.weighted_discrepancy;
            d["discrepancy_history"] = r.discrepancy_history;
            return d;
        },
        py::arg("A"), py::arg("b"), py::arg("model"), py::arg("noise_norm") = 0.0, py::arg("tau") = 1.0,
        py::arg("max_iter") = 500);

    // spotlight
    py::class_<spotlight::Projector>(m, "Projector")
        .def(py::init<DenseMatrix>(), py::arg("basis"))
        .def_property_readonly("dim", &spotlight::Projector::dim)
        .def_property_readonly("rank", &spotlight::Projector::rank)
        .def_property_readonly("basis", &spotlight::Projector::basis)
        .def("apply_P", &spotlight::Projector::apply_P, py::arg("v"))
        .def("apply_Pperp", py::overload_cast<const Vector&>(&spotlight::Projector::apply_Pperp, py::const_),
             py::arg("v"));
    m.def(
        "priorsketch",
        [](const MatrixLike& A2, const std::function<Vector(std::uint64_t)>& sampler, Index k, std::uint64_t seed,
           const std::string& method, double noise_norm) {
            spotlight::SketchOptions o;
            o.method = parse_basis(method);
            o.noise_norm = noise_norm;
            auto r = spotlight::priorsketch(as_operator(A2), sampler, k, seed, o);
            return py::make_tuple(std::move(r.projector), diagnostics_dict(r.diagnostics));
        },
        py::arg("A2"), py::arg("sampler"), py::arg("k"), py::arg("seed"), py::arg("method") = "svd",
        py::arg("noise_norm") = 0.0);
    m.def(
        "projector_from_error_sample",
        [](const DenseMatrix& draws, Index k, double noise_norm) {
            auto r = spotlight::projector_from_error_sample({draws}, k, noise_norm);
            return py::make_tuple(std::move(r.projector), diagnostics_dict(r.diagnostics));
        },
        py::arg("draws"), py::arg("k"), py::arg("noise_norm") = 0.0);
    m.def(
        "spotlight_solve",
        [](const spotlight::Projector& P, const MatrixLike& A, const Vector& b, const Vector& mu, double noise_norm,
           double tau, int max_iter) {
            MorozovOptions o;
            o.noise_norm = noise_norm;
            o.tau = tau;
            o.max_iter = max_iter;
            return lsqr_dict(spotlight::spotlight_solve(P, as_operator(A), b, mu, o));
        },
        py::arg("projector"), py::arg("A"), py::arg("b"), py::arg("mu"), py::arg("noise_norm") = 0.0,
        py::arg("tau") = 1.0, py::arg("max_iter") = 1000);
    m.def("gaussian_clutter_map", &spotlight::gaussian_clutter_map, py::arg("A1"), py::arg("A2"), py::arg("C11"),
          py::arg("C22"), py::arg("Ce"), py::arg("b"));

    // tomo
    py::class_<tomo::TomoSetup>(m, "TomoSetup")
        .def_property_readonly("n_side", [](const tomo::TomoSetup& s) { return s.grid.n_side; })
        .def_readonly("fine", &tomo::TomoSetup::fine)
        .def_readonly("coarse", &tomo::TomoSetup::coarse)
        .def_property_readonly("coarsening", [](const tomo::TomoSetup& s) { return s.map.P; })
        .def("restrict", [](const tomo::TomoSetup& s, const Vector& fine) { return tomo::restrict_image(s.map, fine); })
        .def("prolong", [](const tomo::TomoSetup& s, const Vector& c) { return tomo::prolong_image(s.map, c); });
    m.def(
        "tomo_setup",
        [](Index n_side, Index n_angles, Index n_rays, Index region, Index block) {
            tomo::FanBeamGeometry g;
            g.n_angles = n_angles;
            g.n_rays = n_rays;
            return tomo::make_tomo_setup(n_side, g, region, block);
        },
        py::arg("n_side") = 64, py::arg("n_angles") = 60, py::arg("n_rays") = 95, py::arg("region") = 32,
        py::arg("block") = 16);
    m.def(
        "lotus_phantom", [](Index n_side) { return tomo::lotus_phantom(tomo::PixelGrid{n_side}); },
        py::arg("n_side"));
    m.def(
        "simulate_sinogram",
        [](const tomo::TomoSetup& s, const Vector& image, double noise_rel, std::uint64_t seed) {
            const tomo::Sinogram sino = tomo::simulate_sinogram(s.fine, s.geom, image, noise_rel, seed);
            return py::make_tuple(sino.stacked(), *sino.noise_std);
        },
        py::arg("setup"), py::arg("image"), py::arg("noise_rel"), py::arg("seed"));
    m.def(
        "coarsening_error_sample",
        [](const tomo::TomoSetup& s, double lambda, double alpha, double xi0, double gamma, Index L,
           std::uint64_t seed) {
            const auto prior = tomo::make_tomo_prior(s.grid, lambda, {xi0, alpha, gamma});
            return tomo::sample_coarsening_error(s.fine, s.coarse, s.map, prior, L, seed).draws;
        },
        py::arg("setup"), py::arg("lambda_") = 10.0, py::arg("alpha") = 3.0, py::arg("xi0") = 0.0,
        py::arg("gamma") = 1.0, py::arg("L") = 100, py::arg("seed") = 1000);

    // eit
    py::class_<eit::EitSetup>(m, "EitSetup")
        .def_property_readonly("electrodes", [](const eit::EitSetup& s) { return s.electrodes.count(); })
        .def_property_readonly("elements", [](const eit::EitSetup& s) { return s.unit_mesh.element_count(); })
        .def_property_readonly("nodes", [](const eit::EitSetup& s) { return s.unit_mesh.nodes; })
        .def_readonly("interior", &eit::EitSetup::interior)
        .def_readonly("frame", &eit::EitSetup::frame);
    m.def(
        "eit_setup",
        [](int refinement, Index electrodes, double coverage, double z) {
            return eit::make_eit_setup(refinement, eit::equispaced_electrodes(electrodes, coverage, z));
        },
        py::arg("refinement") = 3, py::arg("electrodes") = 32, py::arg("coverage") = 0.5, py::arg("z") = 0.01);
    m.def(
        "cem_voltages",
        [](const eit::EitSetup& s, const Vector& sigma) {
            return eit::cem_forward(s.unit_mesh, sigma, s.electrodes, s.frame).U;
        },
        py::arg("setup"), py::arg("sigma"));
    m.def(
        "cem_jacobian",
        [](const eit::EitSetup& s, const Vector& sigma) {
            return eit::cem_jacobian(s.unit_mesh, sigma, s.electrodes, s.frame);
        },
        py::arg("setup"), py::arg("sigma"));

    // io
    m.def(
        "write_bundle",
        [](const std::filesystem::path& stem, const DenseMatrix& M, const std::map<std::string, std::string>& header) {
            io::Header h;
            for (const auto& [k, v] : header) h.set(k, v);
            io::write_matrix_bundle(stem, M, h);
        },
        py::arg("stem"), py::arg("matrix"), py::arg("header") = std::map<std::string, std::string>{});
    m.def(
        "read_bundle",
        [](const std::filesystem::path& stem) {
            auto [M, h] = io::read_matrix_bundle(stem);
            return py::make_tuple(M, h.entries());
        },
        py::arg("stem"));
}
