#pragma once

#include <functional>
#include <memory>

#include "tubecalc/tube.hpp"

namespace tubecalc {

/// Scalar field living on the tube grid nodes, representing a function on
/// the boundary through constancy along normal rays.
template <int D>
struct SurfaceField {
    std::shared_ptr<const TubeQuadrature<D>> quad;
    std::vector<double> values;
    bool zero_mean = false;
};

/// Energy bookkeeping of a Laplace-Beltrami solve: total = dirichlet - load;
/// the normal regularization is reported separately and vanishes on fields
/// constant along normals.
struct EnergyReport {
    double dirichlet = 0.0;
    double load = 0.0;
    double total = 0.0;
    double normal_penalty = 0.0;
    int cg_iters = 0;
    double residual = 0.0;
};

struct LbParams {
    double eps_normal = 1.0;
    double tol_cg = 1e-8;
    int max_iters = 0;  // 0: 10 sqrt(#nodes)
    int threads = 1;
};

namespace detail {

/// Matrix-free quadratic form of the thickened-surface energy
///   E(u) = sum_i m_i [ 1/2 |P grad u|^2 + eps/2 <grad u, nu>^2 ]
/// with compact-stencil grid gradients: centered where both axis neighbors
/// are tube nodes, one-sided at the fringe. The operator is assembled as
/// G^T W G and applied by a race-free gather, so it is symmetric positive
/// semidefinite by construction with exactly the constants in its kernel.
template <int D>
class TubeEnergyOperator {
  public:
    enum Mode : std::uint8_t { none = 0, centered = 1, forward = 2, backward = 3 };

    TubeEnergyOperator(std::shared_ptr<const TubeQuadrature<D>> quad, double eps_normal,
                       int threads)
        : quad_(std::move(quad)), eps_(eps_normal), threads_(threads) {
        const auto& q = *quad_;
        const std::size_t n = q.nodes.size();
        nbr_plus_.assign(n * D, -1);
        nbr_minus_.assign(n * D, -1);
        mode_.assign(n * D, none);
        mass_.resize(n);
        const double inv2h = 1.0 / (2.0 * q.h);
        for (std::size_t i = 0; i < n; ++i) {
            mass_[i] = q.nodes[i].cell_volume / q.nodes[i].J * inv2h;
            auto idx = q.grid.unflatten(q.node_flat[i]);
            for (int d = 0; d < D; ++d) {
                auto up = idx, dn = idx;
                ++up[d];
                --dn[d];
                const std::int32_t p =
                    q.grid.in_bounds(up) ? q.grid_to_node[static_cast<std::size_t>(
                                               q.grid.flatten(up))]
                                         : -1;
                const std::int32_t m =
                    q.grid.in_bounds(dn) ? q.grid_to_node[static_cast<std::size_t>(
                                               q.grid.flatten(dn))]
                                         : -1;
                nbr_plus_[i * D + d] = p;
                nbr_minus_[i * D + d] = m;
                mode_[i * D + d] = p >= 0 && m >= 0 ? centered
                                  : p >= 0          ? forward
                                  : m >= 0          ? backward
                                                    : none;
            }
        }
    }

    std::size_t size() const { return mass_.size(); }
    const std::vector<double>& mass() const { return mass_; }
    const TubeQuadrature<D>& quad() const { return *quad_; }
    double eps_normal() const { return eps_; }

    Vec<D> gradient_at(std::span<const double> u, std::size_t i) const {
        const double inv = 1.0 / quad_->spacing;
        Vec<D> g = Vec<D>::Zero();
        for (int d = 0; d < D; ++d) {
            const auto p = nbr_plus_[i * D + d];
            const auto m = nbr_minus_[i * D + d];
            switch (mode_[i * D + d]) {
                case centered: g[d] = (u[p] - u[m]) * 0.5 * inv; break;
                case forward: g[d] = (u[p] - u[i]) * inv; break;
                case backward: g[d] = (u[i] - u[m]) * inv; break;
                case none: break;
            }
        }
        return g;
    }

    /// out = A u with A = G^T diag(m B) G, B = P + eps nu nu^T.
    void apply(std::span<const double> u, std::span<double> out) const {
        const std::size_t n = size();
        flux_.resize(n);
        parallel_for(n, threads_, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const Vec<D> g = gradient_at(u, i);
                const Vec<D>& nu = quad_->nodes[i].nu;
                flux_[i] = mass_[i] * (g - (1.0 - eps_) * nu.dot(g) * nu);
            }
        });
        const double inv = 1.0 / quad_->spacing;
        parallel_for(n, threads_, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t j = lo; j < hi; ++j) {
                double acc = 0.0;
                for (int d = 0; d < D; ++d) {
                    const auto p = nbr_plus_[j * D + d];
                    const auto m = nbr_minus_[j * D + d];
                    switch (mode_[j * D + d]) {
                        case forward: acc -= flux_[j][d] * inv; break;
                        case backward: acc += flux_[j][d] * inv; break;
                        default: break;
                    }
                    if (m >= 0) {
                        const Mode mm = mode_[static_cast<std::size_t>(m) * D + d];
                        if (mm == centered)
                            acc += flux_[m][d] * 0.5 * inv;
                        else if (mm == forward)
                            acc += flux_[m][d] * inv;
                    }
                    if (p >= 0) {
                        const Mode pm = mode_[static_cast<std::size_t>(p) * D + d];
                        if (pm == centered)
                            acc -= flux_[p][d] * 0.5 * inv;
                        else if (pm == backward)
                            acc -= flux_[p][d] * inv;
                    }
                }
                out[j] = acc;
            }
        });
    }

    double weighted_mean(std::span<const double> u) const {
        std::vector<double> acc(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) acc[i] = mass_[i] * u[i];
        return pairwise_sum(acc) / total_mass();
    }

    void project_zero_mean(std::span<double> u) const {
        const double mu = weighted_mean(u);
        for (double& v : u) v -= mu;
    }

    double total_mass() const {
        if (total_mass_ < 0.0) total_mass_ = pairwise_sum(mass_);
        return total_mass_;
    }

    double dot(std::span<const double> a, std::span<const double> b) const {
        std::vector<double> acc(a.size());
        parallel_for(a.size(), threads_, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) acc[i] = a[i] * b[i];
        });
        return pairwise_sum(acc);
    }

    /// 1/2 sum m |P grad u|^2 (tangential part only).
    double dirichlet_energy(std::span<const double> u) const {
        std::vector<double> acc(size());
        parallel_for(size(), threads_, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const Vec<D> g = gradient_at(u, i);
                const Vec<D>& nu = quad_->nodes[i].nu;
                acc[i] = 0.5 * mass_[i] * (g - nu.dot(g) * nu).squaredNorm();
            }
        });
        return pairwise_sum(acc);
    }

    double normal_energy(std::span<const double> u) const {
        std::vector<double> acc(size());
        parallel_for(size(), threads_, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const Vec<D> g = gradient_at(u, i);
                const double gn = quad_->nodes[i].nu.dot(g);
                acc[i] = 0.5 * eps_ * mass_[i] * gn * gn;
            }
        });
        return pairwise_sum(acc);
    }

  private:
    std::shared_ptr<const TubeQuadrature<D>> quad_;
    double eps_;
    int threads_;
    std::vector<std::int32_t> nbr_plus_, nbr_minus_;
    std::vector<Mode> mode_;
    std::vector<double> mass_;
    mutable std::vector<Vec<D>> flux_;
    mutable double total_mass_ = -1.0;
};

/// Conjugate gradients on the zero-mean subspace. The operator maps the
/// subspace to itself (A 1 = 0, A symmetric); iterates are re-projected each
/// step to stop roundoff drift along the constants.
template <int D>
std::pair<int, double> cg_zero_mean(const TubeEnergyOperator<D>& op,
                                    std::span<const double> rhs, std::span<double> u,
                                    double tol, int max_iters) {
    const std::size_t n = op.size();
    std::vector<double> r(rhs.begin(), rhs.end());
    std::vector<double> p(r), ap(n);
    std::fill(u.begin(), u.end(), 0.0);
    const double rhs_norm = std::sqrt(op.dot(r, r));
    if (rhs_norm == 0.0) return {0, 0.0};
    double rs = rhs_norm * rhs_norm;
    int it = 0;
    for (; it < max_iters; ++it) {
        if (std::sqrt(rs) <= tol * rhs_norm) return {it, std::sqrt(rs) / rhs_norm};
        op.apply(p, ap);
        const double pap = op.dot(p, ap);
        if (!(pap > 0.0)) break;  // exhausted the positive subspace
        const double alpha = rs / pap;
        for (std::size_t i = 0; i < n; ++i) {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        op.project_zero_mean(u);
        op.project_zero_mean(r);
        const double rs_new = op.dot(r, r);
        const double beta = rs_new / rs;
        rs = rs_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    const double rel = std::sqrt(rs) / rhs_norm;
    if (rel > tol)
        throw NoConvergence("tube energy solve stalled at relative residual " +
                                std::to_string(rel),
                            it);
    return {it, rel};
}

}  // namespace detail

/// Solves the Laplace-Beltrami equation (tangential laplacian of v equals f)
/// by minimizing the thickened quadratic energy
///   (1/2h) integral of 1/2 |P grad u|^2 + (eps/2) <grad u, grad b>^2 + f u
/// over zero-mean fields with the reciprocal-Jacobian weight. f is sampled
/// at footpoints and projected to zero surface mean before solving.
template <int D>
std::pair<SurfaceField<D>, EnergyReport> solve_lb(
    std::shared_ptr<const TubeQuadrature<D>> quad,
    const std::function<double(const Vec<D>&)>& f, const LbParams& params = {}) {
    if (params.eps_normal <= 0.0)
        throw SingularWithoutRegularization(
            "the tube energy is singular along normals without eps_normal > 0");
    detail::TubeEnergyOperator<D> op(quad, params.eps_normal, params.threads);
    const std::size_t n = op.size();
    std::vector<double> fval(n);
    for (std::size_t i = 0; i < n; ++i) fval[i] = f(quad->nodes[i].x);
    const double fmean = op.weighted_mean(fval);
    for (double& v : fval) v -= fmean;
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = -op.mass()[i] * fval[i];
    // rhs is weighted zero-mean by construction; clean roundoff anyway
    op.project_zero_mean(rhs);

    SurfaceField<D> field;
    field.quad = quad;
    field.values.resize(n);
    field.zero_mean = true;
    const int max_iters = params.max_iters > 0
                              ? params.max_iters
                              : static_cast<int>(10.0 * std::sqrt(double(n))) + 50;
    const auto [iters, residual] =
        detail::cg_zero_mean<D>(op, rhs, field.values, params.tol_cg, max_iters);

    EnergyReport rep;
    rep.cg_iters = iters;
    rep.residual = residual;
    rep.dirichlet = op.dirichlet_energy(field.values);
    rep.normal_penalty = op.normal_energy(field.values);
    {
        std::vector<double> acc(n);
        for (std::size_t i = 0; i < n; ++i)
            acc[i] = op.mass()[i] * fval[i] * field.values[i];
        rep.load = pairwise_sum(acc);
    }
    rep.total = rep.dirichlet - rep.load;
    return {std::move(field), rep};
}

template <int D>
std::pair<SurfaceField<D>, EnergyReport> solve_lb(const ShapeSpec& shape,
                                                  const std::function<double(const Vec<D>&)>& f,
                                                  double h, double spacing,
                                                  const LbParams& params = {}) {
    TubeOptions to;
    to.threads = params.threads;
    auto quad = std::make_shared<const TubeQuadrature<D>>(
        build_tube<D>(shape, h, spacing, to));
    return solve_lb<D>(std::move(quad), f, params);
}

/// Smallest Rayleigh quotient of the discrete tangential energy over
/// zero-mean fields, by inverse power iteration; the best constant of the
/// surface Poincare inequality.
template <int D>
double rayleigh_poincare(std::shared_ptr<const TubeQuadrature<D>> quad,
                         const LbParams& params = {}, int max_power_iters = 60) {
    detail::TubeEnergyOperator<D> op(quad, params.eps_normal, params.threads);
    const std::size_t n = op.size();
    std::vector<double> x(n), y(n), ax(n), mx(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = radical_inverse(i + 1, 2) - 0.5;
    op.project_zero_mean(x);
    const int max_iters =
        params.max_iters > 0 ? params.max_iters : static_cast<int>(10.0 * std::sqrt(double(n))) + 50;
    std::vector<double> my(n);
    auto m_norm2 = [&](std::span<const double> v) {
        for (std::size_t i = 0; i < n; ++i) my[i] = op.mass()[i] * v[i] * v[i];
        return pairwise_sum(my);
    };
    double lambda_prev = 0.0;
    for (int k = 0; k < max_power_iters; ++k) {
        for (std::size_t i = 0; i < n; ++i) mx[i] = op.mass()[i] * x[i];
        op.project_zero_mean(mx);
        detail::cg_zero_mean<D>(op, mx, y, params.tol_cg, max_iters);
        const double ny = std::sqrt(m_norm2(y));
        for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ny;
        op.apply(x, ax);
        const double lambda = op.dot(x, ax) / m_norm2(x);
        if (k > 2 && std::abs(lambda - lambda_prev) < 1e-8 * std::abs(lambda)) return lambda;
        lambda_prev = lambda;
    }
    return lambda_prev;
}

/// Boundary functional of the solved field: integral of
/// j2(x, nu, v, tangential gradient of v) over the boundary.
template <int D>
double eval_F2(
    const SurfaceField<D>& field,
    const std::function<double(const Vec<D>&, const Vec<D>&, double, const Vec<D>&)>& j2,
    double eps_normal = 1.0, int threads = 1) {
    detail::TubeEnergyOperator<D> op(field.quad, eps_normal, threads);
    const std::size_t n = op.size();
    std::vector<double> vals(n);
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& nd = field.quad->nodes[i];
            const Vec<D> g = op.gradient_at(field.values, i);
            const Vec<D> gt = g - nd.nu.dot(g) * nd.nu;
            vals[i] = j2(nd.x, nd.nu, field.values[i], gt);
        }
    });
    return surface_integral_values<D>(*field.quad, vals);
}

}  // namespace tubecalc
