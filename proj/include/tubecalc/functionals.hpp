#pragma once

#include <functional>
#include <string>

#include "tubecalc/reach.hpp"
#include "tubecalc/tube.hpp"

namespace tubecalc {

/// Boundary integrand j(x, nu, H) for the geometric functional. H follows the
/// undivided-trace convention: the sum of the principal curvatures, not their
/// mean (a unit sphere has H = 2 in 3-d).
enum class IntegrandKind {
    constant_one,
    mean_curvature,
    willmore,         // H^2
    normal_moment,    // <nu, e> for a fixed unit direction e
    position_weighted,  // g(x) * H with affine g
    custom_tabulated,
};

struct IntegrandSpec {
    IntegrandKind kind = IntegrandKind::constant_one;
    std::vector<double> params;
    bool convex_in_H = true;

    static IntegrandSpec area() { return {IntegrandKind::constant_one, {}, true}; }
    static IntegrandSpec mean_curvature() { return {IntegrandKind::mean_curvature, {}, true}; }
    static IntegrandSpec willmore() { return {IntegrandKind::willmore, {}, true}; }
    static IntegrandSpec normal_moment(std::vector<double> e) {
        return {IntegrandKind::normal_moment, std::move(e), true};
    }
    static IntegrandSpec position_weighted(std::vector<double> affine) {
        return {IntegrandKind::position_weighted, std::move(affine), true};
    }

    /// CLI catalogue names.
    static IntegrandSpec named(const std::string& name, int dim) {
        if (name == "area") return area();
        if (name == "mean-curvature") return mean_curvature();
        if (name == "willmore") return willmore();
        if (name == "normal-moment") {
            std::vector<double> e(static_cast<std::size_t>(dim), 0.0);
            e.back() = 1.0;
            return normal_moment(std::move(e));
        }
        if (name == "weighted-curvature") {
            std::vector<double> g(static_cast<std::size_t>(dim) + 1, 0.0);
            g[0] = 1.0;
            return position_weighted(std::move(g));
        }
        throw InvalidArgument("unknown integrand '" + name +
                              "' (area, mean-curvature, willmore, normal-moment, "
                              "weighted-curvature)");
    }

    template <int D>
    double evaluate(const Vec<D>& x, const Vec<D>& nu, double H) const {
        switch (kind) {
            case IntegrandKind::constant_one: return 1.0;
            case IntegrandKind::mean_curvature: return H;
            case IntegrandKind::willmore: return H * H;
            case IntegrandKind::normal_moment: {
                Vec<D> e;
                for (int d = 0; d < D; ++d) e[d] = params.at(d);
                return nu.dot(e.normalized());
            }
            case IntegrandKind::position_weighted: {
                double g = params.at(0);
                for (int d = 0; d < D; ++d) g += params.at(1 + d) * x[d];
                return g * H;
            }
            case IntegrandKind::custom_tabulated:
                throw InvalidArgument("custom integrands take the callback overload");
        }
        return 0.0;
    }
};

/// Tube quadrature parameters. Zero entries are resolved from a certified
/// reach estimate: h = quarter reach, spacing = h/5.
struct QuadParams {
    double h = 0.0;
    double spacing = 0.0;
    int threads = 1;
    std::uint64_t seed = 0;
    bool medial_check = true;
    bool subcell = false;  // fractional band membership (see TubeOptions)
};

template <int D>
QuadParams resolve_quad_params(const ShapeSpec& shape, QuadParams qp) {
    if (qp.h <= 0.0) {
        ReachOptions ro;
        ro.seed = qp.seed;
        ro.threads = qp.threads;
        const double reach = estimate_reach<D>(shape, 0.01 * shape.diameter(), ro);
        if (reach <= 0.0) throw InvalidArgument("shape failed the reach certification");
        qp.h = 0.25 * reach;
    }
    if (qp.spacing <= 0.0) qp.spacing = qp.h / 5.0;
    return qp;
}

template <int D>
TubeQuadrature<D> build_tube(const ShapeSpec& shape, const QuadParams& qp0) {
    const QuadParams qp = resolve_quad_params<D>(shape, qp0);
    TubeOptions to;
    to.threads = qp.threads;
    to.medial_check = qp.medial_check;
    to.subcell_membership = qp.subcell;
    return build_tube<D>(shape, qp.h, qp.spacing, to);
}

/// Geometric shape functional: integral over the boundary of j(x, nu(x), H(x)).
template <int D>
double eval_F1(const TubeQuadrature<D>& quad, const IntegrandSpec& j, int threads = 1) {
    std::vector<double> vals(quad.nodes.size());
    parallel_for(quad.nodes.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& nd = quad.nodes[i];
            vals[i] = j.evaluate<D>(nd.x, nd.nu, nd.shape_op_eigs.sum());
        }
    });
    return surface_integral_values<D>(quad, vals);
}

template <int D>
double eval_F1(const ShapeSpec& shape, const IntegrandSpec& j, const QuadParams& qp = {}) {
    const TubeQuadrature<D> quad = build_tube<D>(shape, qp);
    return eval_F1<D>(quad, j, qp.threads);
}

/// Callback form for tabulated integrands.
template <int D>
double eval_F1(const TubeQuadrature<D>& quad,
               const std::function<double(const Vec<D>&, const Vec<D>&, double)>& j,
               int threads = 1) {
    std::vector<double> vals(quad.nodes.size());
    parallel_for(quad.nodes.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& nd = quad.nodes[i];
            vals[i] = j(nd.x, nd.nu, nd.shape_op_eigs.sum());
        }
    });
    return surface_integral_values<D>(quad, vals);
}

template <int D>
double perimeter(const ShapeSpec& shape, const QuadParams& qp = {}) {
    return eval_F1<D>(shape, IntegrandSpec::area(), qp);
}

template <int D>
double perimeter(const TubeQuadrature<D>& quad, int threads = 1) {
    return eval_F1<D>(quad, IntegrandSpec::area(), threads);
}

}  // namespace tubecalc
