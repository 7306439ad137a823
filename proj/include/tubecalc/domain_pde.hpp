#pragma once

#include <functional>
#include <unordered_map>

#include "tubecalc/grid.hpp"
#include "tubecalc/tube.hpp"

namespace tubecalc {

template <int D>
using ScalarFn = std::function<double(const Vec<D>&)>;

/// Dirichlet Poisson solution on the inside region of a shape, discretized
/// on a vertex-centered grid. Nodes with b < 0 are unknowns; grid edges
/// crossing the boundary carry the intercept fraction theta and the Dirichlet
/// value at the intercept. Exterior nodes adjacent to the domain hold
/// linearly extrapolated ghost values so traces can interpolate near the
/// boundary.
template <int D>
struct DomainField {
    GridSpec<D> grid;
    ShapeSpec shape;
    std::vector<std::int64_t> interior;         // flat indices, scan order
    std::vector<std::int32_t> flat_to_interior;
    std::vector<double> values;
    std::vector<double> arm;         // theta per node per direction (2D slots)
    std::vector<std::int32_t> nbr;   // interior neighbor index or -1
    std::vector<double> bc;          // Dirichlet value at the intercept
    std::unordered_map<std::int64_t, double> ghost;
    ScalarFn<D> dirichlet;
    int cg_iters = 0;
    double residual = 0.0;

    /// Multilinear interpolation using interior and ghost values.
    double value_at(const Vec<D>& p) const {
        std::array<std::int64_t, D> base{};
        Vec<D> w;
        for (int d = 0; d < D; ++d) {
            const double s = (p[d] - grid.origin[d]) / grid.spacing;
            base[d] = static_cast<std::int64_t>(std::floor(s));
            w[d] = s - static_cast<double>(base[d]);
            if (base[d] < 0 || base[d] + 1 >= grid.dims[d])
                throw InsufficientInteriorStencil("interpolation point escapes the grid");
        }
        double acc = 0.0;
        for (int corner = 0; corner < (1 << D); ++corner) {
            auto idx = base;
            double weight = 1.0;
            for (int d = 0; d < D; ++d) {
                if (corner & (1 << d)) {
                    ++idx[d];
                    weight *= w[d];
                } else {
                    weight *= 1.0 - w[d];
                }
            }
            const std::int64_t flat = grid.flatten(idx);
            const std::int32_t ii = flat_to_interior[static_cast<std::size_t>(flat)];
            if (ii >= 0) {
                acc += weight * values[static_cast<std::size_t>(ii)];
            } else {
                const auto it = ghost.find(flat);
                if (it == ghost.end())
                    throw InsufficientInteriorStencil(
                        "interpolation touches a node with no interior support");
                acc += weight * it->second;
            }
        }
        return acc;
    }
};

struct PoissonParams {
    double tol_cg = 1e-10;
    int max_iters = 0;  // 0: auto from the unknown count
    int threads = 1;
    std::int64_t max_nodes = 200'000'000;
    double intercept_tol_rel = 1e-10;  // bisection tolerance relative to spacing
};

namespace detail {

/// Shortley-Weller operator rows: per axis, unequal-arm second difference
///   (2/(t- + t+)) [ (u+ - u0)/t+ - (u0 - u-)/t- ] / spacing^2
/// exact on quadratics. Cut arms reference the Dirichlet intercept value.
template <int D>
struct SwSystem {
    const DomainField<D>* f;
    int threads;

    void apply(std::span<const double> u, std::span<double> out) const {
        const std::size_t n = f->interior.size();
        const double inv_h2 = 1.0 / (f->grid.spacing * f->grid.spacing);
        parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                double acc = 0.0;
                for (int d = 0; d < D; ++d) {
                    const double tm = f->arm[(i * D + d) * 2];
                    const double tp = f->arm[(i * D + d) * 2 + 1];
                    const std::int32_t im = f->nbr[(i * D + d) * 2];
                    const std::int32_t ip = f->nbr[(i * D + d) * 2 + 1];
                    const double um = im >= 0 ? u[im] : 0.0;
                    const double up = ip >= 0 ? u[ip] : 0.0;
                    const double c = 2.0 / (tm + tp) * inv_h2;
                    acc += c * ((u[i] - up) / tp + (u[i] - um) / tm);
                }
                out[i] = acc;  // -laplacian
            }
        });
    }

    std::vector<double> diagonal() const {
        const std::size_t n = f->interior.size();
        const double inv_h2 = 1.0 / (f->grid.spacing * f->grid.spacing);
        std::vector<double> diag(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int d = 0; d < D; ++d) {
                const double tm = f->arm[(i * D + d) * 2];
                const double tp = f->arm[(i * D + d) * 2 + 1];
                acc += 2.0 / (tm + tp) * inv_h2 * (1.0 / tp + 1.0 / tm);
            }
            diag[i] = acc;
        }
        return diag;
    }
};

template <int D>
double det_dot(std::span<const double> a, std::span<const double> b, int threads) {
    std::vector<double> acc(a.size());
    parallel_for(a.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) acc[i] = a[i] * b[i];
    });
    return pairwise_sum(acc);
}

/// Jacobi-preconditioned conjugate gradients. The Shortley-Weller matrix is
/// an M-matrix whose asymmetry is confined to the boundary layer; CG behaves
/// like the symmetric case here and the residual guard below catches any
/// stall.
template <int D>
std::pair<int, double> pcg(const SwSystem<D>& sys, std::span<const double> rhs,
                           std::span<double> u, double tol, int max_iters, int threads) {
    const std::size_t n = rhs.size();
    std::vector<double> diag = sys.diagonal();
    std::vector<double> r(rhs.begin(), rhs.end()), z(n), p(n), ap(n);
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    p = z;
    double rz = det_dot<D>(r, z, threads);
    // Convergence in the Jacobi-scaled norm: cut arms with tiny intercept
    // fractions carry huge row weights that would otherwise mask the
    // residual of the smooth bulk.
    const double rhs_norm = std::sqrt(rz);
    if (rhs_norm == 0.0) return {0, 0.0};
    double best = 1.0;
    int stall = 0;
    for (int it = 0; it < max_iters; ++it) {
        const double rel = std::sqrt(std::max(rz, 0.0)) / rhs_norm;
        if (rel <= tol) return {it, rel};
        if (rel < best * 0.999) {
            best = rel;
            stall = 0;
        } else if (++stall > 200) {
            throw NoConvergence("poisson solve stalled at relative residual " +
                                    std::to_string(rel),
                                it);
        }
        sys.apply(p, ap);
        const double pap = det_dot<D>(p, ap, threads);
        if (!(pap > 0.0))
            throw NoConvergence("poisson operator lost positivity in cg", it);
        const double alpha = rz / pap;
        for (std::size_t i = 0; i < n; ++i) {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
        const double rz_new = det_dot<D>(r, z, threads);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    const double rel = std::sqrt(std::max(rz, 0.0)) / rhs_norm;
    if (rel > tol)
        throw NoConvergence("poisson solve did not reach tolerance, residual " +
                                std::to_string(rel),
                            max_iters);
    return {max_iters, rel};
}

}  // namespace detail

/// Solves laplacian(u) = h_src inside the shape with u = g on the boundary.
/// Boundary intercepts are located by bisection of b along grid edges; ties
/// (nodes exactly on the boundary) count as boundary nodes.
template <int D>
DomainField<D> solve_poisson_dirichlet(const ShapeSpec& shape, const ScalarFn<D>& h_src,
                                       const ScalarFn<D>& g, double spacing,
                                       const PoissonParams& params = {}) {
    if (!(spacing > 0.0)) throw SpacingTooCoarse("poisson solve requires positive spacing");
    DomainField<D> f;
    f.shape = shape;
    f.dirichlet = g;
    const AmbientBox<D> box = shape.bounding_box<D>(2.0 * spacing);
    f.grid = GridSpec<D>::cover(box, spacing);
    const std::int64_t ngrid = f.grid.size();
    if (ngrid > params.max_nodes)
        throw GridTooLarge("poisson grid of " + std::to_string(ngrid) + " nodes exceeds budget");

    std::vector<double> bval(static_cast<std::size_t>(ngrid));
    parallel_for(static_cast<std::size_t>(ngrid), params.threads,
                 [&](std::size_t lo, std::size_t hi) {
                     for (std::size_t i = lo; i < hi; ++i)
                         bval[i] = eval_b<D>(shape, f.grid.point(static_cast<std::int64_t>(i)));
                 });
    f.flat_to_interior.assign(static_cast<std::size_t>(ngrid), -1);
    for (std::int64_t i = 0; i < ngrid; ++i) {
        if (bval[static_cast<std::size_t>(i)] < 0.0) {
            f.flat_to_interior[static_cast<std::size_t>(i)] =
                static_cast<std::int32_t>(f.interior.size());
            f.interior.push_back(i);
        }
    }
    const std::size_t n = f.interior.size();
    if (n == 0) throw SpacingTooCoarse("no interior nodes; spacing too coarse for the shape");

    // arms and intercepts
    f.arm.assign(n * D * 2, 1.0);
    f.nbr.assign(n * D * 2, -1);
    f.bc.assign(n * D * 2, 0.0);
    const double bis_tol = params.intercept_tol_rel * spacing;
    parallel_for(n, params.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto idx = f.grid.unflatten(f.interior[i]);
            const Vec<D> xi = f.grid.point(idx);
            for (int d = 0; d < D; ++d) {
                for (int side = 0; side < 2; ++side) {
                    auto jdx = idx;
                    jdx[d] += side == 0 ? -1 : 1;
                    const std::size_t slot = (i * D + d) * 2 + static_cast<std::size_t>(side);
                    if (!f.grid.in_bounds(jdx)) {
                        // unreachable: the inflated box keeps an exterior ring
                        f.bc[slot] = g(xi);
                        continue;
                    }
                    const std::int64_t jflat = f.grid.flatten(jdx);
                    const std::int32_t jint = f.flat_to_interior[static_cast<std::size_t>(jflat)];
                    if (jint >= 0) {
                        f.nbr[slot] = jint;
                        f.arm[slot] = 1.0;
                        continue;
                    }
                    // boundary crossing on this edge: bisect b for the root
                    const Vec<D> xj = f.grid.point(jdx);
                    double lo_t = 0.0, hi_t = 1.0;
                    while ((hi_t - lo_t) * spacing > bis_tol) {
                        const double mid = 0.5 * (lo_t + hi_t);
                        const Vec<D> xm = xi + mid * (xj - xi);
                        if (eval_b<D>(shape, xm) < 0.0)
                            lo_t = mid;
                        else
                            hi_t = mid;
                    }
                    const double theta = std::max(0.5 * (lo_t + hi_t), 1e-6);
                    f.arm[slot] = theta;
                    f.bc[slot] = g(xi + theta * (xj - xi));
                }
            }
        }
    });

    // right-hand side: -h + boundary contributions of the cut arms
    const double inv_h2 = 1.0 / (spacing * spacing);
    std::vector<double> rhs(n);
    parallel_for(n, params.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Vec<D> xi = f.grid.point(f.interior[i]);
            double acc = -h_src(xi);
            for (int d = 0; d < D; ++d) {
                const double tm = f.arm[(i * D + d) * 2];
                const double tp = f.arm[(i * D + d) * 2 + 1];
                const double c = 2.0 / (tm + tp) * inv_h2;
                if (f.nbr[(i * D + d) * 2] < 0) acc += c * f.bc[(i * D + d) * 2] / tm;
                if (f.nbr[(i * D + d) * 2 + 1] < 0) acc += c * f.bc[(i * D + d) * 2 + 1] / tp;
            }
            rhs[i] = acc;
        }
    });

    f.values.assign(n, 0.0);
    detail::SwSystem<D> sys{&f, params.threads};
    const int max_iters = params.max_iters > 0
                              ? params.max_iters
                              : std::max(2000, static_cast<int>(15.0 * std::sqrt(double(n))));
    const auto [iters, residual] =
        detail::pcg<D>(sys, rhs, f.values, params.tol_cg, max_iters, params.threads);
    f.cg_iters = iters;
    f.residual = residual;

    // ghost ring 1: linear extrapolation through the intercept per cut arm
    std::unordered_map<std::int64_t, std::pair<double, int>> ghost_acc;
    for (std::size_t i = 0; i < n; ++i) {
        const auto idx = f.grid.unflatten(f.interior[i]);
        for (int d = 0; d < D; ++d) {
            for (int side = 0; side < 2; ++side) {
                const std::size_t slot = (i * D + d) * 2 + static_cast<std::size_t>(side);
                if (f.nbr[slot] >= 0) continue;
                auto jdx = idx;
                jdx[d] += side == 0 ? -1 : 1;
                if (!f.grid.in_bounds(jdx)) continue;
                const double theta = f.arm[slot];
                const double ui = f.values[i];
                const double ghost = ui + (f.bc[slot] - ui) / theta;
                auto& slotv = ghost_acc[f.grid.flatten(jdx)];
                slotv.first += ghost;
                slotv.second += 1;
            }
        }
    }
    f.ghost.reserve(ghost_acc.size());
    for (const auto& [flat, acc] : ghost_acc) f.ghost[flat] = acc.first / acc.second;

    // outer sweeps: exterior nodes diagonal to the domain get values by
    // linear continuation along grid lines so interpolation cells touching
    // the boundary are always complete
    auto value_of = [&](const std::array<std::int64_t, D>& idx, double& out) {
        if (!f.grid.in_bounds(idx)) return false;
        const std::int64_t flat = f.grid.flatten(idx);
        const std::int32_t ii = f.flat_to_interior[static_cast<std::size_t>(flat)];
        if (ii >= 0) {
            out = f.values[static_cast<std::size_t>(ii)];
            return true;
        }
        const auto it = f.ghost.find(flat);
        if (it == f.ghost.end()) return false;
        out = it->second;
        return true;
    };
    for (int sweep = 0; sweep < 2; ++sweep) {
        std::unordered_map<std::int64_t, std::pair<double, int>> next;
        std::vector<std::int64_t> front;
        for (const auto& [flat, v] : f.ghost) front.push_back(flat);
        std::sort(front.begin(), front.end());
        for (const std::int64_t flat : front) {
            const auto idx = f.grid.unflatten(flat);
            for (int d = 0; d < D; ++d) {
                for (int side = 0; side < 2; ++side) {
                    auto out_idx = idx;
                    out_idx[d] += side == 0 ? -1 : 1;
                    if (!f.grid.in_bounds(out_idx)) continue;
                    const std::int64_t out_flat = f.grid.flatten(out_idx);
                    if (f.flat_to_interior[static_cast<std::size_t>(out_flat)] >= 0) continue;
                    if (f.ghost.count(out_flat)) continue;
                    auto in_idx = idx;
                    in_idx[d] += side == 0 ? 1 : -1;
                    double v1 = 0.0, v2 = 0.0;
                    if (!value_of(idx, v1) || !value_of(in_idx, v2)) continue;
                    auto& slotv = next[out_flat];
                    slotv.first += 2.0 * v1 - v2;
                    slotv.second += 1;
                }
            }
        }
        if (next.empty()) break;
        for (const auto& [flat, acc] : next) f.ghost[flat] = acc.first / acc.second;
    }
    return f;
}

/// Trace samples aligned with the nodes of a tube quadrature.
template <int D>
struct TraceSamples {
    std::vector<double> u;
    std::vector<Vec<D>> grad;
};

/// Boundary values and gradients at footpoints: u equals the Dirichlet data;
/// the normal derivative comes from a second-order one-sided difference along
/// the inward normal through two interpolated interior samples, and the
/// tangential part from the surface gradient of the data.
template <int D>
TraceSamples<D> boundary_trace(const DomainField<D>& field, const TubeQuadrature<D>& quad,
                               int threads = 1) {
    const std::size_t n = quad.nodes.size();
    TraceSamples<D> out;
    out.u.resize(n);
    out.grad.resize(n);
    const double dx = field.grid.spacing;
    const double gstep = 1e-6 * quad.shape.diameter();
    std::vector<std::uint8_t> bad(n, 0);
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Vec<D>& x = quad.nodes[i].x;
            const Vec<D>& nu = quad.nodes[i].nu;
            const double u0 = field.dirichlet(x);
            out.u[i] = u0;
            double u1 = 0.0, u2 = 0.0;
            try {
                u1 = field.value_at(x - dx * nu);
                u2 = field.value_at(x - 2.0 * dx * nu);
            } catch (const InsufficientInteriorStencil&) {
                bad[i] = 1;
                continue;
            }
            const double dn = (3.0 * u0 - 4.0 * u1 + u2) / (2.0 * dx);
            Vec<D> gg;
            for (int d = 0; d < D; ++d)
                gg[d] = (field.dirichlet(x + gstep * Vec<D>::Unit(d)) -
                         field.dirichlet(x - gstep * Vec<D>::Unit(d))) /
                        (2.0 * gstep);
            out.grad[i] = (gg - nu.dot(gg) * nu) + dn * nu;
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        if (bad[i])
            throw InsufficientInteriorStencil(
                "trace reconstruction lacks interior support near a thin feature");
    return out;
}

/// Boundary functional of the domain solution: integral of
/// j3(x, nu, u, grad u) over the boundary via the tube quadrature.
template <int D>
double eval_F3(
    const ShapeSpec& shape,
    const std::function<double(const Vec<D>&, const Vec<D>&, double, const Vec<D>&)>& j3,
    const ScalarFn<D>& h_src, const ScalarFn<D>& g, double tube_h, double tube_spacing,
    double poisson_spacing, const PoissonParams& params = {}) {
    const DomainField<D> field =
        solve_poisson_dirichlet<D>(shape, h_src, g, poisson_spacing, params);
    TubeOptions to;
    to.threads = params.threads;
    const TubeQuadrature<D> quad = build_tube<D>(shape, tube_h, tube_spacing, to);
    const TraceSamples<D> tr = boundary_trace<D>(field, quad, params.threads);
    std::vector<double> vals(quad.nodes.size());
    parallel_for(quad.nodes.size(), params.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            vals[i] = j3(quad.nodes[i].x, quad.nodes[i].nu, tr.u[i], tr.grad[i]);
    });
    return surface_integral_values<D>(quad, vals);
}

}  // namespace tubecalc
