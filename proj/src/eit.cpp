#include "modred/eit.hpp"

#include "modred/io.hpp"
#include "modred/parallel.hpp"
#include "modred/random.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace modred::eit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double t) {
    t = std::fmod(t, kTwoPi);
    return t < 0.0 ? t + kTwoPi : t;
}

// Signed offset of t from arc begin, in [0, 2 pi).
double arc_offset(double t, double begin) { return wrap_angle(t - begin); }

struct Grad {
    double b[3];
    double c[3];
    double area;
};

Grad element_gradients(const DenseMatrix& nodes, const Triangle& t) {
    const double x0 = nodes(t[0], 0), y0 = nodes(t[0], 1);
    const double x1 = nodes(t[1], 0), y1 = nodes(t[1], 1);
    const double x2 = nodes(t[2], 0), y2 = nodes(t[2], 1);
    Grad g{};
    g.area = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0));
    g.b[0] = y1 - y2;
    g.b[1] = y2 - y0;
    g.b[2] = y0 - y1;
    g.c[0] = x2 - x1;
    g.c[1] = x0 - x2;
    g.c[2] = x1 - x0;
    return g;
}

// Stitches two closed rings (angles ascending) into triangles.
void stitch_rings(const std::vector<Index>& inner, const std::vector<double>& inner_t,
                  const std::vector<Index>& outer_in, const std::vector<double>& outer_t_in, const DenseMatrix& nodes,
                  std::vector<Triangle>& tris) {
    const std::size_t na = inner.size(), nb = outer_in.size();
    // Start the outer ring at the node angularly nearest to inner[0].
    std::size_t j0 = 0;
    double best = kTwoPi;
    for (std::size_t j = 0; j < nb; ++j) {
        const double d = std::abs(std::remainder(outer_t_in[j] - inner_t[0], kTwoPi));
        if (d < best) best = d, j0 = j;
    }
    std::vector<Index> outer(nb);
    std::vector<double> outer_t(nb);
    for (std::size_t k = 0; k < nb; ++k) {
        const std::size_t j = (j0 + k) % nb;
        outer[k] = outer_in[j];
        outer_t[k] = outer_t_in[j] + (j < j0 ? kTwoPi : 0.0);
    }
    const double shift = outer_t[0] - inner_t[0] - std::remainder(outer_t[0] - inner_t[0], kTwoPi);
    for (double& t : outer_t) t -= shift;
    auto angle = [](const std::vector<double>& t, std::size_t i) {
        return i < t.size() ? t[i] : t[i - t.size()] + kTwoPi;
    };
    std::size_t i = 0, j = 0;
    while (i < na || j < nb) {
        const bool advance_inner = j == nb || (i < na && angle(inner_t, i + 1) < angle(outer_t, j + 1));
        Triangle tri;
        if (advance_inner) {
            tri = {inner[i % na], inner[(i + 1) % na], outer[j % nb]};
            ++i;
        } else {
            tri = {inner[i % na], outer[(j + 1) % nb], outer[j % nb]};
            ++j;
        }
        Grad g = element_gradients(nodes, tri);
        if (g.area < 0.0) std::swap(tri[1], tri[2]);
        tris.push_back(tri);
    }
}

// Edges owned by exactly one triangle, oriented as in that triangle.
std::vector<Edge> free_edges(const std::vector<Triangle>& tris) {
    std::map<std::pair<Index, Index>, int> count;
    for (const Triangle& t : tris)
        for (int k = 0; k < 3; ++k) {
            const Index a = t[k], b = t[(k + 1) % 3];
            ++count[{std::min(a, b), std::max(a, b)}];
        }
    std::vector<Edge> out;
    for (const Triangle& t : tris)
        for (int k = 0; k < 3; ++k) {
            const Index a = t[k], b = t[(k + 1) % 3];
            if (count[{std::min(a, b), std::max(a, b)}] == 1) out.push_back({a, b});
        }
    return out;
}

// Orders free edges into one closed chain; throws if that is impossible.
std::vector<Edge> chain_boundary(const std::vector<Edge>& edges) {
    if (edges.size() < 3) throw std::invalid_argument("DiskMesh: boundary has fewer than 3 edges");
    std::map<Index, Index> next;
    for (const Edge& e : edges)
        if (!next.emplace(e[0], e[1]).second) throw std::invalid_argument("DiskMesh: boundary is not a simple curve");
    std::vector<Edge> chain;
    Index start = edges.front()[0], cur = start;
    do {
        auto it = next.find(cur);
        if (it == next.end()) throw std::invalid_argument("DiskMesh: boundary is not closed");
        chain.push_back({cur, it->second});
        cur = it->second;
    } while (cur != start && chain.size() <= edges.size());
    if (chain.size() != edges.size()) throw std::invalid_argument("DiskMesh: boundary has several components");
    return chain;
}

}  // namespace

void Electrodes::validate() const {
    const Index L = count();
    if (L < 2) throw std::invalid_argument("Electrodes: need at least 2 electrodes");
    if (z.size() != L) throw std::invalid_argument("Electrodes: one contact impedance per electrode required");
    if (!(z.array() > 0.0).all()) throw std::invalid_argument("Electrodes: contact impedances must be positive");
    std::vector<std::pair<double, double>> sorted;
    for (const auto& [a, b] : arcs) {
        if (!(b > a) || b - a >= kTwoPi) throw std::invalid_argument("Electrodes: invalid arc");
        sorted.emplace_back(wrap_angle(a), b - a);
    }
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        const auto& [start, len] = sorted[k];
        const double next = k + 1 < sorted.size() ? sorted[k + 1].first : sorted[0].first + kTwoPi;
        if (start + len >= next) throw std::invalid_argument("Electrodes: arcs overlap");
    }
}

Electrodes equispaced_electrodes(Index L, double coverage, double z) {
    if (L < 2) throw std::invalid_argument("equispaced_electrodes: need at least 2 electrodes");
    if (!(coverage > 0.0 && coverage < 1.0)) throw std::invalid_argument("equispaced_electrodes: coverage must be in (0, 1)");
    Electrodes el;
    const double half = 0.5 * coverage * kTwoPi / static_cast<double>(L);
    for (Index l = 0; l < L; ++l) {
        const double c = kTwoPi * static_cast<double>(l) / static_cast<double>(L);
        el.arcs.emplace_back(c - half, c + half);
    }
    el.z = Vector::Constant(L, z);
    el.validate();
    return el;
}

double DiskMesh::signed_area(Index element) const {
    return element_gradients(nodes, triangles[static_cast<std::size_t>(element)]).area;
}

Vector DiskMesh::areas() const {
    Vector a(element_count());
    for (Index e = 0; e < element_count(); ++e) a(e) = signed_area(e);
    return a;
}

DenseMatrix DiskMesh::centroids() const {
    DenseMatrix c(element_count(), 2);
    for (Index e = 0; e < element_count(); ++e) {
        const Triangle& t = triangles[static_cast<std::size_t>(e)];
        for (int d = 0; d < 2; ++d) c(e, d) = (nodes(t[0], d) + nodes(t[1], d) + nodes(t[2], d)) / 3.0;
    }
    return c;
}

void DiskMesh::validate() const {
    if (nodes.cols() != 2) throw std::invalid_argument("DiskMesh: nodes must have 2 coordinates");
    for (Index e = 0; e < element_count(); ++e) {
        for (Index v : triangles[static_cast<std::size_t>(e)])
            if (v < 0 || v >= node_count()) throw std::invalid_argument("DiskMesh: element references missing node");
        if (!(signed_area(e) > 0.0)) {
            std::ostringstream msg;
            msg << "DiskMesh: element " << e << " is not positively oriented";
            throw std::invalid_argument(msg.str());
        }
    }
    const std::vector<Edge> chain = chain_boundary(free_edges(triangles));
    if (chain.size() != boundary.size()) throw std::invalid_argument("DiskMesh: stored boundary is inconsistent");
    std::map<std::pair<Index, Index>, Index> owner;
    for (const Edge& e : boundary) owner[{e[0], e[1]}] = -1;
    for (Index l = 0; l < electrode_count(); ++l) {
        if (electrode_edges[static_cast<std::size_t>(l)].empty())
            throw std::invalid_argument("DiskMesh: electrode without edges");
        for (const Edge& e : electrode_edges[static_cast<std::size_t>(l)]) {
            auto it = owner.find({e[0], e[1]});
            if (it == owner.end()) throw std::invalid_argument("DiskMesh: electrode edge not on the boundary");
            if (it->second != -1) throw std::invalid_argument("DiskMesh: electrodes share an edge");
            it->second = l;
        }
    }
}

DiskMesh unit_disk_mesh(int refinement, const Electrodes& electrodes) {
    if (refinement < 1) throw std::invalid_argument("unit_disk_mesh: refinement must be >= 1");
    if (refinement > 12) throw std::invalid_argument("unit_disk_mesh: refinement too large");
    electrodes.validate();
    const Index R = Index{5} << (refinement - 1);

    std::vector<double> xs{0.0}, ys{0.0};
    std::vector<std::vector<Index>> ring_nodes;
    std::vector<std::vector<double>> ring_angles;
    for (Index i = 1; i < R; ++i) {
        const double r = static_cast<double>(i) / static_cast<double>(R);
        const Index n = std::max<Index>(6, static_cast<Index>(std::lround(kTwoPi * static_cast<double>(i))));
        const double phase = (i % 2 == 1) ? 0.0 : std::numbers::pi / static_cast<double>(n);
        std::vector<Index> ids;
        std::vector<double> ts;
        for (Index k = 0; k < n; ++k) {
            const double t = phase + kTwoPi * static_cast<double>(k) / static_cast<double>(n);
            ids.push_back(static_cast<Index>(xs.size()));
            ts.push_back(t);
            xs.push_back(r * std::cos(t));
            ys.push_back(r * std::sin(t));
        }
        ring_nodes.push_back(std::move(ids));
        ring_angles.push_back(std::move(ts));
    }

    std::vector<double> breaks;
    for (const auto& [a, b] : electrodes.arcs) {
        breaks.push_back(wrap_angle(a));
        breaks.push_back(wrap_angle(b));
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 breaks.end());
    const double h = kTwoPi / std::max<double>(6.0, std::round(kTwoPi * static_cast<double>(R)));
    std::vector<Index> outer;
    std::vector<double> outer_t;
    for (std::size_t k = 0; k < breaks.size(); ++k) {
        const double a = breaks[k];
        const double b = k + 1 < breaks.size() ? breaks[k + 1] : breaks[0] + kTwoPi;
        const Index segs = std::max<Index>(1, static_cast<Index>(std::ceil((b - a) / h - 1e-9)));
        for (Index s = 0; s < segs; ++s) {
            const double t = a + (b - a) * static_cast<double>(s) / static_cast<double>(segs);
            outer.push_back(static_cast<Index>(xs.size()));
            outer_t.push_back(t);
            xs.push_back(std::cos(t));
            ys.push_back(std::sin(t));
        }
    }
    if (outer.size() < 6) {
        throw std::invalid_argument("unit_disk_mesh: too few boundary nodes");
    }

    DiskMesh mesh;
    mesh.nodes.resize(static_cast<Index>(xs.size()), 2);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mesh.nodes(static_cast<Index>(k), 0) = xs[k];
        mesh.nodes(static_cast<Index>(k), 1) = ys[k];
    }

    const std::vector<Index>& first = ring_nodes.empty() ? outer : ring_nodes.front();
    for (std::size_t k = 0; k < first.size(); ++k) mesh.triangles.push_back({0, first[k], first[(k + 1) % first.size()]});
    for (std::size_t i = 0; i + 1 < ring_nodes.size(); ++i)
        stitch_rings(ring_nodes[i], ring_angles[i], ring_nodes[i + 1], ring_angles[i + 1], mesh.nodes, mesh.triangles);
    if (!ring_nodes.empty())
        stitch_rings(ring_nodes.back(), ring_angles.back(), outer, outer_t, mesh.nodes, mesh.triangles);

    for (std::size_t k = 0; k < outer.size(); ++k) mesh.boundary.push_back({outer[k], outer[(k + 1) % outer.size()]});

    mesh.electrode_edges.resize(static_cast<std::size_t>(electrodes.count()));
    for (std::size_t k = 0; k < outer.size(); ++k) {
        const double t0 = outer_t[k];
        const double t1 = k + 1 < outer.size() ? outer_t[k + 1] : outer_t[0] + kTwoPi;
        const double mid = 0.5 * (t0 + t1);
        for (Index l = 0; l < electrodes.count(); ++l) {
            const auto& [a, b] = electrodes.arcs[static_cast<std::size_t>(l)];
            if (arc_offset(mid, a) < b - a) mesh.electrode_edges[static_cast<std::size_t>(l)].push_back(mesh.boundary[k]);
        }
    }
    mesh.validate();
    return mesh;
}

std::vector<std::pair<Index, Index>> element_adjacency(const DiskMesh& mesh) {
    std::map<std::pair<Index, Index>, Index> first_owner;
    std::vector<std::pair<Index, Index>> pairs;
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const Triangle& t = mesh.triangles[static_cast<std::size_t>(e)];
        for (int k = 0; k < 3; ++k) {
            const Index a = t[k], b = t[(k + 1) % 3];
            auto [it, inserted] = first_owner.emplace(std::make_pair(std::min(a, b), std::max(a, b)), e);
            if (!inserted) pairs.emplace_back(it->second, e);
        }
    }
    return pairs;
}

void ShapeParams::validate() const {
    if (!std::isfinite(a_c) || !std::isfinite(a_s) || !(std::abs(a_c) + std::abs(a_s) < 1.0))
        throw std::invalid_argument("ShapeParams: |a_c| + |a_s| must be < 1");
    if (!(x_scale > 0.0) || !std::isfinite(x_scale)) throw std::invalid_argument("ShapeParams: x_scale must be positive");
}

ShapeParams standard_shape() { return {0.05, 0.0, 1.1}; }

DiskMesh deform_mesh(const DiskMesh& mesh, const ShapeParams& shape) {
    shape.validate();
    DiskMesh out = mesh;
    for (Index i = 0; i < mesh.node_count(); ++i) {
        const double x = mesh.nodes(i, 0), y = mesh.nodes(i, 1);
        const double r = std::hypot(x, y);
        const double t = std::atan2(y, x);
        const double rho = r * (1.0 + shape.a_c * std::cos(3.0 * t) + shape.a_s * std::sin(3.0 * t));
        out.nodes(i, 0) = shape.x_scale * rho * std::cos(t);
        out.nodes(i, 1) = rho * std::sin(t);
    }
    for (Index e = 0; e < out.element_count(); ++e)
        if (!(out.signed_area(e) > 0.0)) {
            std::ostringstream msg;
            msg << "deform_mesh: element " << e << " inverted by the shape map";
            throw std::runtime_error(msg.str());
        }
    return out;
}

ShapeParams draw_random_shape(std::uint64_t seed) {
    Rng rng(seed);
    const double xi = uniform01(rng);
    const double nu = uniform01(rng);
    return {0.1 * xi, 0.1 * (nu - 0.5), 1.1};
}

DenseMatrix pairwise_frame(Index L) {
    if (L < 2) throw std::invalid_argument("pairwise_frame: need at least 2 electrodes");
    DenseMatrix C = DenseMatrix::Zero(L, L - 1);
    for (Index k = 0; k < L - 1; ++k) {
        C(k, k) = 1.0;
        C(L - 1, k) = -1.0;
    }
    return C;
}

namespace {

SparseMatrix assemble_cem(const DiskMesh& mesh, const Vector& sigma, const Electrodes& electrodes,
                          const DenseMatrix& gauge) {
    const Index n = mesh.node_count();
    const Index L = electrodes.count();
    if (mesh.electrode_count() != L) throw std::invalid_argument("cem: mesh and electrode counts differ");
    if (sigma.size() != mesh.element_count()) throw std::invalid_argument("cem: one conductivity per element required");
    if (!(sigma.array() > 0.0).all() || !sigma.allFinite())
        throw std::invalid_argument("cem: conductivity must be positive and finite");

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(9 * mesh.element_count()));
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const Triangle& t = mesh.triangles[static_cast<std::size_t>(e)];
        const Grad g = element_gradients(mesh.nodes, t);
        if (!(g.area > 0.0)) throw std::invalid_argument("cem: degenerate or inverted element");
        const double s = sigma(e) / (4.0 * g.area);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) trips.emplace_back(t[i], t[j], s * (g.b[i] * g.b[j] + g.c[i] * g.c[j]));
    }

    // B(:, l) = -(1/z_l) int_{e_l} phi, D_l = |e_l| / z_l.
    DenseMatrix B = DenseMatrix::Zero(n, L);
    Vector D = Vector::Zero(L);
    for (Index l = 0; l < L; ++l) {
        const double inv_z = 1.0 / electrodes.z(l);
        for (const Edge& edge : mesh.electrode_edges[static_cast<std::size_t>(l)]) {
            const double h = std::hypot(mesh.nodes(edge[0], 0) - mesh.nodes(edge[1], 0),
                                        mesh.nodes(edge[0], 1) - mesh.nodes(edge[1], 1));
            const double m_ii = inv_z * h / 3.0, m_ij = inv_z * h / 6.0;
            trips.emplace_back(edge[0], edge[0], m_ii);
            trips.emplace_back(edge[1], edge[1], m_ii);
            trips.emplace_back(edge[0], edge[1], m_ij);
            trips.emplace_back(edge[1], edge[0], m_ij);
            B(edge[0], l) -= 0.5 * inv_z * h;
            B(edge[1], l) -= 0.5 * inv_z * h;
            D(l) += inv_z * h;
        }
    }
    const DenseMatrix BC = B * gauge;
    const DenseMatrix CDC = gauge.transpose() * D.asDiagonal() * gauge;
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < L - 1; ++k)
            if (BC(i, k) != 0.0) {
                trips.emplace_back(i, n + k, BC(i, k));
                trips.emplace_back(n + k, i, BC(i, k));
            }
    for (Index a = 0; a < L - 1; ++a)
        for (Index b = 0; b < L - 1; ++b) trips.emplace_back(n + a, n + b, CDC(a, b));

    SparseMatrix A(n + L - 1, n + L - 1);
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    return A;
}

}  // namespace

CemSystem::CemSystem(const DiskMesh& mesh, const Vector& sigma, const Electrodes& electrodes)
    : n_nodes_(mesh.node_count()),
      n_electrodes_(electrodes.count()),
      gauge_(pairwise_frame(electrodes.count())),
      solver_(assemble_cem(mesh, sigma, electrodes, gauge_)) {}

Vector CemSystem::solve_gauge(const Vector& gauge_rhs) const {
    Vector rhs = Vector::Zero(n_nodes_ + n_electrodes_ - 1);
    rhs.tail(n_electrodes_ - 1) = gauge_rhs;
    return solver_.solve(rhs, 1e-10);
}

CemSolution CemSystem::solve(const DenseMatrix& frame) const {
    if (frame.rows() != n_electrodes_) throw std::invalid_argument("CemSystem::solve: frame has wrong row count");
    for (Index k = 0; k < frame.cols(); ++k)
        if (std::abs(frame.col(k).sum()) > 1e-12 * std::max(1.0, frame.col(k).cwiseAbs().sum()))
            throw std::invalid_argument("CemSystem::solve: current pattern violates Kirchhoff's law");
    const Index P = frame.cols();
    CemSolution out;
    out.u.resize(n_nodes_, P);
    out.U.resize(n_electrodes_, P);
    for (Index k = 0; k < P; ++k) {
        const Vector z = solve_gauge(gauge_.transpose() * frame.col(k));
        out.u.col(k) = z.head(n_nodes_);
        out.U.col(k) = gauge_ * z.tail(n_electrodes_ - 1);
    }
    out.V = Eigen::Map<const Vector>(out.U.data(), out.U.size());
    return out;
}

DenseMatrix CemSystem::adjoint_fields() const {
    DenseMatrix w(n_nodes_, n_electrodes_);
    for (Index l = 0; l < n_electrodes_; ++l) w.col(l) = solve_gauge(gauge_.row(l).transpose()).head(n_nodes_);
    return w;
}

CemSolution cem_forward(const DiskMesh& mesh, const Vector& sigma, const Electrodes& electrodes,
                        const DenseMatrix& frame) {
    return CemSystem(mesh, sigma, electrodes).solve(frame);
}

DenseMatrix cem_jacobian(const DiskMesh& mesh, const Vector& sigma, const Electrodes& electrodes,
                         const DenseMatrix& frame) {
    const CemSystem sys(mesh, sigma, electrodes);
    const CemSolution sol = sys.solve(frame);
    const DenseMatrix w = sys.adjoint_fields();
    const Index L = electrodes.count();
    const Index P = frame.cols();
    DenseMatrix J(L * P, mesh.element_count());
    parallel_for(static_cast<std::size_t>(mesh.element_count()), [&](std::size_t idx) {
        const Index e = static_cast<Index>(idx);
        const Triangle& t = mesh.triangles[idx];
        const Grad g = element_gradients(mesh.nodes, t);
        const double s = 1.0 / (2.0 * g.area);
        Eigen::Matrix<double, 2, 3> G;
        for (int i = 0; i < 3; ++i) {
            G(0, i) = g.b[i] * s;
            G(1, i) = g.c[i] * s;
        }
        DenseMatrix gu(2, P), gw(2, L);
        Eigen::Matrix<double, 3, Eigen::Dynamic> nu(3, P), nw(3, L);
        for (int i = 0; i < 3; ++i) {
            nu.row(i) = sol.u.row(t[i]);
            nw.row(i) = w.row(t[i]);
        }
        gu = G * nu;
        gw = G * nw;
        const DenseMatrix block = -sigma(e) * g.area * (gw.transpose() * gu);  // L x P
        J.col(e) = Eigen::Map<const Vector>(block.data(), block.size());
    });
    return J;
}

std::vector<Index> interior_elements(const DiskMesh& unit_mesh, double radius) {
    const DenseMatrix c = unit_mesh.centroids();
    std::vector<Index> out;
    for (Index e = 0; e < unit_mesh.element_count(); ++e)
        if (std::hypot(c(e, 0), c(e, 1)) < radius) out.push_back(e);
    if (out.empty()) throw std::invalid_argument("interior_elements: no element inside the radius");
    return out;
}

priors::SigmoidFieldPrior make_eit_prior(const DiskMesh& unit_mesh, const std::vector<Index>& interior, double lambda,
                                         double alpha, double gamma) {
    if (!(gamma > 1.0)) throw std::invalid_argument("make_eit_prior: gamma must exceed the background 1");
    std::vector<Index> local(static_cast<std::size_t>(unit_mesh.element_count()), -1);
    for (std::size_t k = 0; k < interior.size(); ++k) local[static_cast<std::size_t>(interior[k])] = static_cast<Index>(k);
    std::vector<std::pair<Index, Index>> edges;
    for (const auto& [a, b] : element_adjacency(unit_mesh)) {
        const Index la = local[static_cast<std::size_t>(a)], lb = local[static_cast<std::size_t>(b)];
        if (la >= 0 && lb >= 0) edges.emplace_back(la, lb);
    }
    const double xi0 = std::log(gamma - 1.0) / alpha;
    return priors::SigmoidFieldPrior(
        priors::GaussianFieldPrior(priors::build_graph_laplacian(static_cast<Index>(interior.size()), edges), lambda),
        {xi0, alpha, gamma});
}

Vector embed_interior(Index n_elements, const std::vector<Index>& interior, const Vector& values, double background) {
    if (values.size() != static_cast<Index>(interior.size()))
        throw std::invalid_argument("embed_interior: value count differs from interior size");
    Vector full = Vector::Constant(n_elements, background);
    for (std::size_t k = 0; k < interior.size(); ++k) full(interior[k]) = values(static_cast<Index>(k));
    return full;
}

EitSetup make_eit_setup(int refinement, const Electrodes& electrodes, double interior_radius) {
    EitSetup s;
    s.electrodes = electrodes;
    s.unit_mesh = unit_disk_mesh(refinement, electrodes);
    s.interior = interior_elements(s.unit_mesh, interior_radius);
    s.frame = pairwise_frame(electrodes.count());
    return s;
}

bae::ErrorSample eit_error_sample(Index L_draws, std::uint64_t seed, const priors::SigmoidFieldPrior& prior,
                                  const EitSetup& setup, const ShapeParams& ref_shape) {
    if (L_draws < 1) throw std::invalid_argument("eit_error_sample: need at least one draw");
    if (prior.dim() != static_cast<Index>(setup.interior.size()))
        throw std::invalid_argument("eit_error_sample: prior dimension differs from interior size");
    const DiskMesh ref_mesh = deform_mesh(setup.unit_mesh, ref_shape);
    const Index m = setup.electrodes.count() * setup.frame.cols();
    bae::ErrorSample out;
    out.draws.resize(m, L_draws);
    parallel_for(static_cast<std::size_t>(L_draws), [&](std::size_t j) {
        try {
            const std::uint64_t s = seed + j;
            const Vector sigma = embed_interior(setup.unit_mesh.element_count(), setup.interior, prior.draw(s));
            const DiskMesh drawn = deform_mesh(setup.unit_mesh, draw_random_shape(mix_seed(s)));
            const Vector fine = cem_forward(drawn, sigma, setup.electrodes, setup.frame).V;
            const Vector coarse = cem_forward(ref_mesh, sigma, setup.electrodes, setup.frame).V;
            out.draws.col(static_cast<Index>(j)) = fine - coarse;
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "eit_error_sample: draw " << j << " failed: " << e.what();
            throw std::runtime_error(msg.str());
        }
    });
    return out;
}

GaussNewtonResult gauss_newton_eit(const Vector& V_data, const spotlight::Projector& proj, const Vector& mu,
                                   const DiskMesh& ref_mesh, const EitSetup& setup, const GaussNewtonOptions& opts) {
    if (opts.n_iter < 1) throw std::invalid_argument("gauss_newton_eit: n_iter must be >= 1");
    if (!(opts.delta > 0.0) || !(opts.reg_lambda > 0.0))
        throw std::invalid_argument("gauss_newton_eit: delta and reg_lambda must be positive");
    const Index m = setup.electrodes.count() * setup.frame.cols();
    if (V_data.size() != m || mu.size() != m || proj.dim() != m)
        throw std::invalid_argument("gauss_newton_eit: data, mean and projector sizes must match");
    if (ref_mesh.element_count() != setup.unit_mesh.element_count())
        throw std::invalid_argument("gauss_newton_eit: reference mesh does not match the setup mesh");

    const Index n = static_cast<Index>(setup.interior.size());
    std::vector<Index> local(static_cast<std::size_t>(ref_mesh.element_count()), -1);
    for (Index k = 0; k < n; ++k) local[static_cast<std::size_t>(setup.interior[static_cast<std::size_t>(k)])] = k;
    std::vector<std::pair<Index, Index>> edges;
    for (const auto& [a, b] : element_adjacency(setup.unit_mesh)) {
        const Index la = local[static_cast<std::size_t>(a)], lb = local[static_cast<std::size_t>(b)];
        if (la >= 0 && lb >= 0) edges.emplace_back(la, lb);
    }
    SparseMatrix eye(n, n);
    eye.setIdentity();
    const SparseMatrix penalty =
        std::sqrt(opts.delta) * (priors::build_graph_laplacian(n, edges) + (1.0 / (opts.reg_lambda * opts.reg_lambda)) * eye);
    const DenseMatrix LtL = DenseMatrix(penalty.transpose() * penalty);
    const Vector target = proj.apply_Pperp(Vector(V_data - mu));

    GaussNewtonResult out;
    out.x = Vector::Zero(n);
    for (int it = 0; it < opts.n_iter; ++it) {
        const Vector sigma = embed_interior(ref_mesh.element_count(), setup.interior, out.x.array().exp().matrix());
        const CemSystem sys(ref_mesh, sigma, setup.electrodes);
        const Vector G = sys.solve(setup.frame).V;
        const DenseMatrix J_full = cem_jacobian(ref_mesh, sigma, setup.electrodes, setup.frame);
        DenseMatrix J(m, n);
        for (Index k = 0; k < n; ++k) J.col(k) = J_full.col(setup.interior[static_cast<std::size_t>(k)]);
        const DenseMatrix A = proj.apply_Pperp(J);
        const Vector r = target - proj.apply_Pperp(G);
        out.misfit_history.push_back(r.norm());

        DenseMatrix H = A.transpose() * A + LtL;
        const Vector rhs = A.transpose() * r - LtL * out.x;
        const Eigen::LLT<DenseMatrix> llt(H);
        if (llt.info() != Eigen::Success) throw std::runtime_error("gauss_newton_eit: normal equations are singular");
        const Vector dx = llt.solve(rhs);
        if (!dx.allFinite()) throw std::runtime_error("gauss_newton_eit: non-finite update");
        out.x += dx;
    }
    const Vector sigma = embed_interior(ref_mesh.element_count(), setup.interior, out.x.array().exp().matrix());
    out.misfit_history.push_back(
        (target - proj.apply_Pperp(cem_forward(ref_mesh, sigma, setup.electrodes, setup.frame).V)).norm());
    return out;
}

Vector inclusion_conductivity(const DiskMesh& unit_mesh, const Inclusion& inc) {
    if (!(inc.sigma0 > 0.0) || !(inc.sigma1 > 0.0) || !(inc.width > 0.0))
        throw std::invalid_argument("inclusion_conductivity: conductivities and width must be positive");
    const DenseMatrix c = unit_mesh.centroids();
    Vector s(unit_mesh.element_count());
    for (Index e = 0; e < unit_mesh.element_count(); ++e) {
        const double d2 = std::pow(c(e, 0) - inc.cx, 2) + std::pow(c(e, 1) - inc.cy, 2);
        s(e) = inc.sigma0 + (inc.sigma1 - inc.sigma0) * std::exp(-d2 / (2.0 * inc.width * inc.width));
    }
    return s;
}

EitData simulate_eit_data(const EitSetup& setup, const ShapeParams& shape, const Inclusion& inclusion,
                          double noise_rel, std::uint64_t seed) {
    if (!(noise_rel >= 0.0)) throw std::invalid_argument("simulate_eit_data: noise_rel must be >= 0");
    const DiskMesh mesh = deform_mesh(setup.unit_mesh, shape);
    EitData out;
    out.V = cem_forward(mesh, inclusion_conductivity(setup.unit_mesh, inclusion), setup.electrodes, setup.frame).V;
    out.noise_std = noise_rel * (out.V.maxCoeff() - out.V.minCoeff());
    if (out.noise_std > 0.0) out.V += out.noise_std * standard_normal_vector(out.V.size(), seed);
    return out;
}

double conductivity_error(const EitSetup& setup, const DiskMesh& mesh, const Vector& x, const Vector& sigma_true) {
    if (x.size() != static_cast<Index>(setup.interior.size()) || sigma_true.size() != mesh.element_count())
        throw std::invalid_argument("conductivity_error: size mismatch");
    const Vector area = mesh.areas();
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < setup.interior.size(); ++k) {
        const Index e = setup.interior[k];
        num += area(e) * std::pow(std::exp(x(static_cast<Index>(k))) - sigma_true(e), 2);
        den += area(e) * sigma_true(e) * sigma_true(e);
    }
    return std::sqrt(num / den);
}

void write_mesh(std::ostream& out, const DiskMesh& mesh) {
    out << "NODES " << mesh.node_count() << "\n";
    for (Index i = 0; i < mesh.node_count(); ++i)
        out << i << " " << io::format_double(mesh.nodes(i, 0)) << " " << io::format_double(mesh.nodes(i, 1)) << "\n";
    out << "ELEMENTS " << mesh.element_count() << "\n";
    for (Index e = 0; e < mesh.element_count(); ++e) {
        const Triangle& t = mesh.triangles[static_cast<std::size_t>(e)];
        out << e << " " << t[0] << " " << t[1] << " " << t[2] << "\n";
    }
    out << "ELECTRODES " << mesh.electrode_count() << "\n";
    for (Index l = 0; l < mesh.electrode_count(); ++l) {
        out << l;
        for (const Edge& e : mesh.electrode_edges[static_cast<std::size_t>(l)]) out << " " << e[0] << " " << e[1];
        out << "\n";
    }
}

namespace {

Index expect_section(std::istream& in, const std::string& name) {
    std::string word;
    Index count = -1;
    if (!(in >> word) || word != name || !(in >> count) || count < 0)
        throw std::runtime_error("read_mesh: expected section " + name);
    return count;
}

}  // namespace

DiskMesh read_mesh(std::istream& in) {
    DiskMesh mesh;
    const Index n_nodes = expect_section(in, "NODES");
    mesh.nodes.resize(n_nodes, 2);
    for (Index i = 0; i < n_nodes; ++i) {
        Index idx = -1;
        if (!(in >> idx >> mesh.nodes(i, 0) >> mesh.nodes(i, 1)) || idx != i)
            throw std::runtime_error("read_mesh: malformed node line " + std::to_string(i));
    }
    const Index n_elems = expect_section(in, "ELEMENTS");
    for (Index e = 0; e < n_elems; ++e) {
        Index idx = -1;
        Triangle t{};
        if (!(in >> idx >> t[0] >> t[1] >> t[2]) || idx != e)
            throw std::runtime_error("read_mesh: malformed element line " + std::to_string(e));
        mesh.triangles.push_back(t);
    }
    const Index n_el = expect_section(in, "ELECTRODES");
    std::string line;
    std::getline(in, line);
    for (Index l = 0; l < n_el; ++l) {
        if (!std::getline(in, line)) throw std::runtime_error("read_mesh: missing electrode line");
        std::istringstream ls(line);
        Index idx = -1;
        if (!(ls >> idx) || idx != l) throw std::runtime_error("read_mesh: malformed electrode line " + std::to_string(l));
        std::vector<Edge> edges;
        Index a, b;
        while (ls >> a >> b) edges.push_back({a, b});
        if (!ls.eof()) throw std::runtime_error("read_mesh: malformed electrode edge list");
        mesh.electrode_edges.push_back(std::move(edges));
    }
    mesh.boundary = chain_boundary(free_edges(mesh.triangles));
    mesh.validate();
    return mesh;
}

}  // namespace modred::eit
