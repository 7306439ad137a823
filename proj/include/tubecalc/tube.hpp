#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "tubecalc/grid.hpp"
#include "tubecalc/sdf.hpp"
#include "tubecalc/util.hpp"

namespace tubecalc {

/// One quadrature node of the extruded surface: a grid cell center y inside
/// the tube, its footpoint x, offset t = b(y), outward normal, principal
/// curvatures at the footpoint and the extrusion Jacobian at (t, x).
template <int D>
struct TubeNode {
    Vec<D> y;
    double t = 0.0;
    Vec<D> x;
    Vec<D> nu;
    Eigen::Matrix<double, D - 1, 1> shape_op_eigs;
    double J = 1.0;
    double cell_volume = 0.0;
};

/// Extrusion Jacobian det(dT) at offset t in a principal orthonormal frame:
/// the product of (1 + t * kappa_i) over the principal curvatures.
template <int KD>
double jacobian_factor(double t, const Eigen::Matrix<double, KD, 1>& kappas) {
    double j = 1.0;
    for (int i = 0; i < KD; ++i) {
        const double f = 1.0 + t * kappas[i];
        if (!(f > 0.0))
            throw DegenerateExtrusion("extrusion factor 1 + t*kappa = " + std::to_string(f) +
                                      " is not positive (tube wider than the focal distance)");
        j *= f;
    }
    return j;
}

/// Principal curvatures and the normal direction extracted from a signed
/// distance Hessian. The eigenvector most aligned with the normal carries the
/// (near zero) normal eigenvalue; the remaining eigenvalues are the shape
/// operator spectrum.
template <int D>
struct PrincipalCurvatures {
    Eigen::Matrix<double, D - 1, 1> kappas;
    double normal_eig = 0.0;
};

template <int D>
PrincipalCurvatures<D> principal_curvatures(const Mat<D>& hess, const Vec<D>& nu,
                                            double curvature_floor,
                                            bool enforce_unambiguous = false) {
    Eigen::SelfAdjointEigenSolver<Mat<D>> eig(hess);
    int normal_idx = 0;
    double best = -1.0;
    for (int i = 0; i < D; ++i) {
        const double a = std::abs(eig.eigenvectors().col(i).dot(nu));
        if (a > best) {
            best = a;
            normal_idx = i;
        }
    }
    PrincipalCurvatures<D> out;
    out.normal_eig = eig.eigenvalues()[normal_idx];
    int k = 0;
    double min_nonzero = std::numeric_limits<double>::max();
    for (int i = 0; i < D; ++i) {
        if (i == normal_idx) continue;
        const double kappa = eig.eigenvalues()[i];
        out.kappas[k++] = kappa;
        if (std::abs(kappa) > curvature_floor)
            min_nonzero = std::min(min_nonzero, std::abs(kappa));
    }
    if (enforce_unambiguous && min_nonzero < std::numeric_limits<double>::max() &&
        std::abs(out.normal_eig) >= 0.1 * min_nonzero)
        throw AmbiguousNormalEigenvalue(
            "no clear near-zero eigenvalue along the normal direction");
    return out;
}

/// Curvature data at a boundary point. H is the undivided trace of the shape
/// operator (sum of principal curvatures), K their product.
template <int D>
struct CurvatureSample {
    Vec<D> x;
    Eigen::Matrix<double, D - 1, 1> kappas;
    double H = 0.0;
    double K = 1.0;
};

template <int D>
CurvatureSample<D> curvature_at(const ShapeSpec& shape, const Vec<D>& x,
                                const SdfOptions& o = {}) {
    const SdfSample<D> s = eval_sdf<D>(shape, x, o);
    if (std::abs(s.b) > 1e-6 * shape.diameter())
        throw InvalidArgument("curvature_at expects a point on the boundary");
    const auto pc =
        principal_curvatures<D>(s.hess, s.grad, 1e-8 / shape.diameter(), true);
    CurvatureSample<D> out;
    out.x = x;
    out.kappas = pc.kappas;
    out.H = pc.kappas.sum();
    out.K = pc.kappas.prod();
    return out;
}

/// Hessian of b at the footpoint of a tube point, obtained by transporting
/// the Hessian at the point itself along the normal ray:
///   hess(p(y)) = hess(y) [Id - b(y) hess(y)]^(-1).
template <int D>
Mat<D> hessian_at_footpoint(const ShapeSpec& shape, const Vec<D>& y, const SdfOptions& o = {}) {
    const SdfSample<D> s = eval_sdf<D>(shape, y, o);
    const Mat<D> m = Mat<D>::Identity() - s.b * s.hess;
    const auto lu = m.partialPivLu();
    if (std::abs(lu.determinant()) < 1e-12)
        throw DegenerateExtrusion("Id - b hess is singular; point beyond the focal distance");
    return s.hess * lu.inverse();
}

/// Quadrature over the tubular neighborhood of the boundary.
template <int D>
struct TubeQuadrature {
    std::vector<TubeNode<D>> nodes;
    double h = 0.0;
    ShapeSpec shape;
    double spacing = 0.0;
    GridSpec<D> grid;
    std::vector<std::int64_t> node_flat;     // grid index per node, scan order
    std::vector<std::int32_t> grid_to_node;  // flat grid index -> node index or -1

    /// Total weighted measure: approximates the boundary area for f == 1.
    double surface_measure() const;
};

struct TubeOptions {
    int threads = 1;
    std::int64_t max_nodes = 200'000'000;
    bool medial_check = true;  // dual-start footpoint checks for Newton shapes
    // Optional higher-accuracy membership: estimate the band fraction of each
    // cell from 2^D subcell centers and weight the cell volume by it, instead
    // of the plain center test.
    bool subcell_membership = false;
};

/// Collects all grid cells with |b(center)| < h, with footpoint, offset,
/// curvatures and extrusion Jacobian per cell. The exact change of variables
/// for a unit-speed normal extrusion uses the reciprocal Jacobian weight, so
/// (1/2h) sum f(x) J^-1 vol equals the boundary integral of f for any h below
/// the reach; node data carries J itself and integration divides by it.
template <int D>
TubeQuadrature<D> build_tube(const ShapeSpec& shape, double h, double spacing,
                             const TubeOptions& opt = {}) {
    if (!(h > 0.0)) throw InvalidArgument("tube half-width must be positive");
    if (!(spacing > 0.0) || spacing >= 0.5 * h)
        throw SpacingTooCoarse("tube spacing must satisfy spacing < h/2");
    TubeQuadrature<D> tube;
    tube.h = h;
    tube.shape = shape;
    tube.spacing = spacing;
    const AmbientBox<D> box = shape.bounding_box<D>(h + 2.0 * spacing);
    tube.grid = GridSpec<D>::cover(box, spacing);
    const std::int64_t n = tube.grid.size();
    if (n > opt.max_nodes)
        throw GridTooLarge("tube grid of " + std::to_string(n) + " nodes exceeds budget");

    std::vector<double> bval(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> member(static_cast<std::size_t>(n), 0);
    std::vector<float> fraction;
    if (opt.subcell_membership) fraction.assign(static_cast<std::size_t>(n), 0.0f);
    parallel_for(static_cast<std::size_t>(n), opt.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Vec<D> y = tube.grid.point(static_cast<std::int64_t>(i));
            bval[i] = eval_b<D>(shape, y);
            if (!opt.subcell_membership) {
                member[i] = std::abs(bval[i]) < h ? 1 : 0;
                continue;
            }
            if (std::abs(bval[i]) >= h + spacing) continue;  // cannot straddle the band
            int inside = 0;
            for (int corner = 0; corner < (1 << D); ++corner) {
                Vec<D> q = y;
                for (int d = 0; d < D; ++d)
                    q[d] += (corner & (1 << d)) ? 0.25 * spacing : -0.25 * spacing;
                if (std::abs(eval_b<D>(shape, q)) < h) ++inside;
            }
            if (inside > 0) {
                member[i] = 1;
                fraction[i] = static_cast<float>(inside) / static_cast<float>(1 << D);
            }
        }
    });
    tube.grid_to_node.assign(static_cast<std::size_t>(n), -1);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!member[static_cast<std::size_t>(i)]) continue;
        tube.grid_to_node[static_cast<std::size_t>(i)] =
            static_cast<std::int32_t>(tube.node_flat.size());
        tube.node_flat.push_back(i);
    }
    if (tube.node_flat.empty())
        throw SpacingTooCoarse("tube contains no grid cells; widen h or refine spacing");

    const bool newton_kind =
        shape.kind == ShapeKind::ellipsoid || shape.kind == ShapeKind::harmonic_sphere;
    SdfOptions node_opt;
    node_opt.check_medial = opt.medial_check && newton_kind;
    node_opt.want_hess = false;

    const std::size_t m = tube.node_flat.size();
    tube.nodes.resize(m);
    std::vector<std::uint8_t> status(m, 0);  // 1 = medial, 2 = degenerate extrusion
    const double cellvol = tube.grid.cell_volume();
    const double curvature_floor = 1e-8 / shape.diameter();
    parallel_for(m, opt.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const std::int64_t flat = tube.node_flat[i];
            TubeNode<D>& nd = tube.nodes[i];
            nd.y = tube.grid.point(flat);
            const SdfSample<D> sy = eval_sdf<D>(shape, nd.y, node_opt);
            if (sy.medial_axis_proximity || !sy.footpoint_valid) {
                status[i] = 1;
                continue;
            }
            nd.t = sy.b;
            nd.x = nd.y - sy.b * sy.grad;
            nd.cell_volume = opt.subcell_membership
                                 ? cellvol * fraction[static_cast<std::size_t>(flat)]
                                 : cellvol;
            const SdfSample<D> sx = eval_sdf<D>(shape, nd.x);
            nd.nu = sx.grad;
            nd.shape_op_eigs =
                principal_curvatures<D>(sx.hess, sx.grad, curvature_floor).kappas;
            double j = 1.0;
            for (int k = 0; k < D - 1; ++k) {
                const double f = 1.0 + nd.t * nd.shape_op_eigs[k];
                if (!(f > 0.0)) {
                    status[i] = 2;
                    break;
                }
                j *= f;
            }
            nd.J = j;
        }
    });
    for (std::size_t i = 0; i < m; ++i) {
        if (status[i] == 1)
            throw TubeOverlapsMedialAxis(
                "tube cell at offset " +
                std::to_string(bval[static_cast<std::size_t>(tube.node_flat[i])]) +
                " hits the medial axis; h exceeds the reach");
        if (status[i] == 2)
            throw DegenerateExtrusion("non-positive extrusion factor inside the tube");
    }
    return tube;
}

/// (1/2h) sum over nodes of f(footpoint) J^-1 cell_volume: converges to the
/// boundary integral of f as the spacing shrinks, independently of h.
template <int D, class F>
double surface_integral(const TubeQuadrature<D>& quad, F&& f, int threads = 1) {
    const std::size_t n = quad.nodes.size();
    std::vector<double> vals(n);
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const TubeNode<D>& nd = quad.nodes[i];
            vals[i] = f(nd.x) * nd.cell_volume / nd.J;
        }
    });
    return pairwise_sum(vals) / (2.0 * quad.h);
}

/// Same weight rule applied to one precomputed value per node.
template <int D>
double surface_integral_values(const TubeQuadrature<D>& quad, std::span<const double> values) {
    if (values.size() != quad.nodes.size())
        throw InvalidArgument("per-node value array does not match the quadrature");
    std::vector<double> vals(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        vals[i] = values[i] * quad.nodes[i].cell_volume / quad.nodes[i].J;
    return pairwise_sum(vals) / (2.0 * quad.h);
}

template <int D>
double TubeQuadrature<D>::surface_measure() const {
    return surface_integral(*this, [](const Vec<D>&) { return 1.0; });
}

/// Debug dump, one line per node: y, t, x, kappas, J, cell_volume.
template <int D>
void dump_tube_csv(const TubeQuadrature<D>& quad, std::ostream& os) {
    for (int d = 0; d < D; ++d) os << "y" << d << ",";
    os << "t,";
    for (int d = 0; d < D; ++d) os << "x" << d << ",";
    for (int k = 0; k < D - 1; ++k) os << "kappa" << k << ",";
    os << "J,cell_volume\n";
    for (const auto& nd : quad.nodes) {
        for (int d = 0; d < D; ++d) os << nd.y[d] << ",";
        os << nd.t << ",";
        for (int d = 0; d < D; ++d) os << nd.x[d] << ",";
        for (int k = 0; k < D - 1; ++k) os << nd.shape_op_eigs[k] << ",";
        os << nd.J << "," << nd.cell_volume << "\n";
    }
}

}  // namespace tubecalc
