#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "tubecalc/geometry.hpp"
#include "tubecalc/shape.hpp"

namespace tubecalc {

/// Signed distance value with first and second derivatives at a point.
/// Convention: b < 0 inside the shape, so grad is the outward unit normal on
/// the boundary and hess restricted to the tangent space is the shape
/// operator at boundary points.
template <int D>
struct SdfSample {
    double b = 0.0;
    Vec<D> grad = Vec<D>::Zero();
    Mat<D> hess = Mat<D>::Zero();
    bool footpoint_valid = true;
    bool medial_axis_proximity = false;
};

struct SdfOptions {
    int max_iter = 50;
    double tol_rel = 1e-10;      // surface tolerance relative to shape diameter
    bool check_medial = false;   // second projection from a perturbed start
    bool want_hess = true;
    // Cross-check interior footpoints against a coarse scan of the whole
    // surface chart. Radial starts can converge to a stationary ray footpoint
    // that is not the nearest point once x crosses the medial set; distance
    // consumers that probe deep interior points (reach margins, sup-norm
    // metrics) must enable this.
    bool global_scan = false;
};

namespace detail {

template <int D>
inline double medial_tol(const ShapeSpec& s, const SdfOptions& o) {
    return 10.0 * o.tol_rel * s.diameter();
}

// ---- closed-form kernels ----------------------------------------------

template <int D>
inline SdfSample<D> sdf_ball_at(const Vec<D>& center, double r, const Vec<D>& x, double mtol) {
    SdfSample<D> out;
    const Vec<D> rel = x - center;
    const double rho = rel.norm();
    if (rho < mtol) {
        out.b = rho - r;
        out.grad = Vec<D>::Unit(0);
        out.footpoint_valid = false;
        out.medial_axis_proximity = true;
        return out;
    }
    const Vec<D> n = rel / rho;
    out.b = rho - r;
    out.grad = n;
    out.hess = (Mat<D>::Identity() - n * n.transpose()) / rho;
    return out;
}

inline SdfSample<3> sdf_torus_at(const Vec<3>& center, double R, double r, const Vec<3>& x,
                                 double mtol) {
    SdfSample<3> out;
    const Vec<3> rel = x - center;
    const double rho = std::hypot(rel[0], rel[1]);
    const Vec<3> ez = Vec<3>::UnitZ();
    if (rho < mtol) {  // revolution axis
        out.b = std::hypot(R, rel[2]) - r;
        out.grad = ez * (rel[2] >= 0 ? 1.0 : -1.0);
        out.footpoint_valid = false;
        out.medial_axis_proximity = true;
        return out;
    }
    const Vec<3> u(rel[0] / rho, rel[1] / rho, 0.0);
    const Vec<3> v(-rel[1] / rho, rel[0] / rho, 0.0);
    const double s = rho - R;
    const double ell = std::hypot(s, rel[2]);
    if (ell < mtol) {  // core circle of the solid tube
        out.b = ell - r;
        out.grad = u;
        out.footpoint_valid = false;
        out.medial_axis_proximity = true;
        return out;
    }
    out.b = ell - r;
    const double br = s / ell, bz = rel[2] / ell;
    out.grad = br * u + bz * ez;
    const double l3 = ell * ell * ell;
    const double brr = rel[2] * rel[2] / l3;
    const double bzz = s * s / l3;
    const double brz = -s * rel[2] / l3;
    out.hess = brr * u * u.transpose() + bzz * ez * ez.transpose() +
               brz * (u * ez.transpose() + ez * u.transpose()) +
               (br / rho) * v * v.transpose();
    return out;
}

template <int D>
inline SdfSample<D> sdf_capsule_at(const ShapeSpec& s, const Vec<D>& x, double mtol) {
    const double r = s.params[0];
    Vec<D> h;
    for (int d = 0; d < D; ++d) h[d] = s.params[1 + d];
    const Vec<D> c = s.center_vec<D>();
    const double L = 2.0 * h.norm();
    if (L < mtol) return sdf_ball_at<D>(c, r, x, mtol);
    const Vec<D> a = c - h;
    const Vec<D> u = (2.0 * h) / L;
    const double t = std::clamp((x - a).dot(u), 0.0, L);
    const Vec<D> q = x - (a + t * u);
    const double rho = q.norm();
    SdfSample<D> out;
    if (rho < mtol) {  // on the spine segment
        out.b = rho - r;
        out.grad = tangent_frame<D>(u)[0];
        out.footpoint_valid = false;
        out.medial_axis_proximity = true;
        return out;
    }
    const Vec<D> n = q / rho;
    out.b = rho - r;
    out.grad = n;
    out.hess = (Mat<D>::Identity() - n * n.transpose()) / rho;
    if (t > 0.0 && t < L) out.hess -= (u * u.transpose()) / rho;  // cylindrical part
    return out;
}

template <int D>
inline SdfSample<D> sdf_union_at(const ShapeSpec& s, const Vec<D>& x, double mtol) {
    const int n = s.balls();
    const Vec<D> c = s.center_vec<D>();
    int best = 0;
    double d1 = std::numeric_limits<double>::max();
    double d2 = std::numeric_limits<double>::max();
    for (int i = 0; i < n; ++i) {
        Vec<D> ci = c;
        for (int d = 0; d < D; ++d) ci[d] += s.params[i * (D + 1) + d];
        const double di = (x - ci).norm() - s.params[i * (D + 1) + D];
        if (di < d1) {
            d2 = d1;
            d1 = di;
            best = i;
        } else if (di < d2) {
            d2 = di;
        }
    }
    Vec<D> cb = c;
    for (int d = 0; d < D; ++d) cb[d] += s.params[best * (D + 1) + d];
    SdfSample<D> out = sdf_ball_at<D>(cb, s.params[best * (D + 1) + D], x, mtol);
    if (n > 1 && d2 - d1 < mtol) {  // equidistant from two components
        out.medial_axis_proximity = true;
        out.footpoint_valid = false;
    }
    return out;
}

// ---- level-set descriptions for shapes without closed-form distance ----

template <int D>
struct EllipsoidLevel {
    Vec<D> c;
    Vec<D> inv_axes2;  // 1/a_i^2

    explicit EllipsoidLevel(const ShapeSpec& s) : c(s.center_vec<D>()) {
        for (int d = 0; d < D; ++d) inv_axes2[d] = 1.0 / (s.params[d] * s.params[d]);
    }
    double value(const Vec<D>& p) const {
        return (p - c).cwiseProduct(p - c).dot(inv_axes2) - 1.0;
    }
    Vec<D> gradient(const Vec<D>& p) const { return 2.0 * (p - c).cwiseProduct(inv_axes2); }
    Mat<D> hessian(const Vec<D>&) const { return (2.0 * inv_axes2).asDiagonal(); }
    /// Surface point in direction w from the center (star-shaped chart).
    Vec<D> surface_point(const Vec<D>& w) const {
        return c + w / std::sqrt(w.cwiseProduct(w).dot(inv_axes2));
    }
    /// Start point for the footpoint iteration: radial scaling onto the
    /// surface. Degenerate only at the exact center.
    std::pair<Vec<D>, bool> radial_init(const Vec<D>& x) const {
        const Vec<D> rel = x - c;
        const double q = rel.cwiseProduct(rel).dot(inv_axes2);
        if (q < 1e-24) {
            Vec<D> p = c;
            p[D - 1] += 1.0 / std::sqrt(inv_axes2[D - 1]);
            return {p, true};
        }
        return {c + rel / std::sqrt(q), false};
    }
};

template <int D>
struct HarmonicLevel {
    const ShapeSpec* s;
    Vec<D> c;
    double ang_step;

    explicit HarmonicLevel(const ShapeSpec& spec)
        : s(&spec), c(spec.center_vec<D>()), ang_step(1e-6) {}

    double radius(const Vec<D>& w) const { return harmonic_radius(*s, w); }

    double value(const Vec<D>& p) const {
        const Vec<D> rel = p - c;
        const double rho = rel.norm();
        return rho - radius(rel / rho);
    }
    /// Tangential derivative of the radial factor by centered differences on
    /// the direction sphere; exact enough for footpoint accuracy since the
    /// root of the system does not depend on the Jacobian quality.
    Vec<D> gradient(const Vec<D>& p) const {
        const Vec<D> rel = p - c;
        const double rho = rel.norm();
        const Vec<D> w = rel / rho;
        Vec<D> grad_s = Vec<D>::Zero();
        for (const auto& t : tangent_frame<D>(w)) {
            const Vec<D> wp = (w + ang_step * t).normalized();
            const Vec<D> wm = (w - ang_step * t).normalized();
            grad_s += ((radius(wp) - radius(wm)) / (2.0 * ang_step)) * t;
        }
        return w - grad_s / rho;
    }
    /// Approximate curvature of the level function, enough for the Newton
    /// direction: the root being solved for does not depend on it, and the
    /// neglected angular curvature of the radial factor only slows the rate.
    Mat<D> hessian(const Vec<D>& p) const {
        const Vec<D> rel = p - c;
        const double rho = rel.norm();
        const Vec<D> w = rel / rho;
        return (Mat<D>::Identity() - w * w.transpose()) / rho;
    }
    Vec<D> surface_point(const Vec<D>& w) const { return c + radius(w) * w; }
    std::pair<Vec<D>, bool> radial_init(const Vec<D>& x) const {
        const Vec<D> rel = x - c;
        const double rho = rel.norm();
        if (rho < 1e-12 * s->params[0]) {
            Vec<D> w = Vec<D>::Unit(D - 1);
            return {c + radius(w) * w, true};
        }
        const Vec<D> w = rel / rho;
        return {c + radius(w) * w, false};
    }
};

// ---- damped Newton on the footpoint optimality system ------------------

template <int D>
struct ProjectionState {
    Vec<D> p = Vec<D>::Zero();
    double lambda = 0.0;
    int iters = 0;
    bool converged = false;
};

template <int D, class Level>
ProjectionState<D> newton_project(const Level& lv, const Vec<D>& x, Vec<D> p, double lambda,
                                  double tol_len, int max_iter) {
    using VecN = Eigen::Matrix<double, D + 1, 1>;
    using MatN = Eigen::Matrix<double, D + 1, D + 1>;
    Vec<D> g = lv.gradient(p);
    auto residual = [&](const Vec<D>& q, double l, Vec<D>& grad_out) {
        grad_out = lv.gradient(q);
        VecN r;
        r.template head<D>() = q - x + l * grad_out;
        r[D] = lv.value(q);
        return r;
    };
    auto error_of = [&](const VecN& r, double gnorm) {
        return std::max(r.template head<D>().template lpNorm<Eigen::Infinity>(),
                        std::abs(r[D]) / std::max(gnorm, 1e-300));
    };
    VecN r = residual(p, lambda, g);
    double err = error_of(r, g.norm());
    int it = 0;
    while (it < max_iter && err > tol_len) {
        ++it;
        MatN jac = MatN::Zero();
        jac.template topLeftCorner<D, D>() = Mat<D>::Identity() + lambda * lv.hessian(p);
        jac.template block<D, 1>(0, D) = g;
        jac.template block<1, D>(D, 0) = g.transpose();
        const VecN step = jac.partialPivLu().solve(-r);
        double t = 1.0;
        for (int back = 0;; ++back) {
            const Vec<D> pn = p + t * step.template head<D>();
            const double ln = lambda + t * step[D];
            Vec<D> gn;
            const VecN rn = residual(pn, ln, gn);
            const double en = error_of(rn, gn.norm());
            if (en < err || en <= tol_len || back >= 10) {
                p = pn;
                lambda = ln;
                r = rn;
                g = gn;
                err = en;
                break;
            }
            t *= 0.5;
        }
    }
    return {p, lambda, it, err <= tol_len};
}

/// Deterministic quasi-uniform unit directions (Fibonacci lattice in 3-d).
template <int D>
std::vector<Vec<D>> scan_directions(int n);

template <>
inline std::vector<Vec<2>> scan_directions<2>(int n) {
    std::vector<Vec<2>> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double th = 2.0 * M_PI * i / n;
        w[static_cast<std::size_t>(i)] = Vec<2>(std::cos(th), std::sin(th));
    }
    return w;
}

template <>
inline std::vector<Vec<3>> scan_directions<3>(int n) {
    std::vector<Vec<3>> w(static_cast<std::size_t>(n));
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        w[static_cast<std::size_t>(i)] = Vec<3>(r * std::cos(ga * i), r * std::sin(ga * i), z);
    }
    return w;
}

template <int D>
struct NewtonEval {
    Vec<D> footpoint = Vec<D>::Zero();
    Vec<D> normal = Vec<D>::Zero();
    double b = 0.0;
    double lambda = 0.0;
    bool medial = false;
    bool footpoint_ok = true;
};

template <int D, class Level>
NewtonEval<D> newton_eval(const Level& lv, const ShapeSpec& s, const Vec<D>& x,
                          const SdfOptions& o) {
    const double diam = s.diameter();
    const double tol_len = o.tol_rel * diam;
    auto [p0, degenerate] = lv.radial_init(x);
    double lam0 = (x - p0).dot(lv.gradient(p0)) / lv.gradient(p0).squaredNorm();
    auto st = newton_project<D>(lv, x, p0, lam0, tol_len, o.max_iter);
    bool ambiguous = false;
    if (st.converged && o.global_scan && lv.value(x) <= 0.0) {
        const auto dirs = scan_directions<D>(D == 2 ? 128 : 256);
        int best = 0;
        double best_d = std::numeric_limits<double>::max();
        for (std::size_t i = 0; i < dirs.size(); ++i) {
            const double di = (lv.surface_point(dirs[i]) - x).norm();
            if (di < best_d) {
                best_d = di;
                best = static_cast<int>(i);
            }
        }
        if (best_d < (x - st.p).norm() - 10.0 * tol_len) {
            const Vec<D> p1 = lv.surface_point(dirs[best]);
            const double lam1 = (x - p1).dot(lv.gradient(p1)) / lv.gradient(p1).squaredNorm();
            const auto st2 = newton_project<D>(lv, x, p1, lam1, tol_len, o.max_iter);
            if (st2.converged && (x - st2.p).norm() < (x - st.p).norm()) st = st2;
        }
    }
    if (!st.converged) {
        // Radial starts break down near the medial axis. Scan the star-shaped
        // chart for the nearest surface sample, retry Newton from there, and
        // if that still fails polish the chart minimum directly; the distance
        // stays reliable there even though the footpoint is ambiguous.
        const auto dirs = scan_directions<D>(D == 2 ? 256 : 800);
        int best = 0;
        double best_d = std::numeric_limits<double>::max();
        std::vector<double> dist(dirs.size());
        for (std::size_t i = 0; i < dirs.size(); ++i) {
            dist[i] = (lv.surface_point(dirs[i]) - x).norm();
            if (dist[i] < best_d) {
                best_d = dist[i];
                best = static_cast<int>(i);
            }
        }
        const double scan_step = diam * (D == 2 ? 2.5 / 256 : std::sqrt(4.0 / dirs.size()));
        for (std::size_t i = 0; i < dirs.size(); ++i)
            if (dist[i] < best_d + 0.5 * scan_step && dirs[i].dot(dirs[best]) < 0.8)
                ambiguous = true;
        const Vec<D> p1 = lv.surface_point(dirs[best]);
        const double lam1 = (x - p1).dot(lv.gradient(p1)) / lv.gradient(p1).squaredNorm();
        st = newton_project<D>(lv, x, p1, lam1, tol_len, o.max_iter);
        if (st.converged && (x - st.p).norm() > best_d + 10.0 * tol_len)
            st.converged = false;  // drifted to a farther stationary point
        if (!st.converged) {
            Vec<D> w = dirs[best];
            double alpha = 2.0 * M_PI / std::sqrt(double(dirs.size()));
            double d_best = best_d;
            for (int iter = 0; iter < 300 && alpha > 1e-9; ++iter) {
                bool improved = false;
                for (const auto& t : tangent_frame<D>(w)) {
                    for (double sgn : {1.0, -1.0}) {
                        const Vec<D> wn = (w + sgn * alpha * t).normalized();
                        const double dn = (lv.surface_point(wn) - x).norm();
                        if (dn < d_best) {
                            d_best = dn;
                            w = wn;
                            improved = true;
                        }
                    }
                }
                if (!improved) alpha *= 0.5;
            }
            NewtonEval<D> out;
            out.footpoint = lv.surface_point(w);
            out.normal = lv.gradient(out.footpoint).normalized();
            out.b = lv.value(x) >= 0.0 ? d_best : -d_best;
            out.medial = true;
            out.footpoint_ok = false;
            return out;
        }
    }
    NewtonEval<D> out;
    out.footpoint = st.p;
    out.lambda = st.lambda;
    out.normal = lv.gradient(st.p).normalized();
    const double dist = (x - st.p).norm();
    out.b = lv.value(x) >= 0.0 ? dist : -dist;
    out.medial = degenerate || ambiguous;
    if (o.check_medial && !degenerate) {
        // Re-run from a tangentially rotated start; disagreeing footpoints
        // indicate a competing nearest point across the medial axis.
        const auto frame = tangent_frame<D>(out.normal);
        const auto init2 = lv.radial_init(p0 + 0.05 * diam * frame[0]);
        const double lam1 = (x - init2.first).dot(lv.gradient(init2.first)) /
                            lv.gradient(init2.first).squaredNorm();
        const auto st2 = newton_project<D>(lv, x, init2.first, lam1, tol_len, o.max_iter);
        if (!st2.converged || (st2.p - st.p).norm() > 10.0 * tol_len) out.medial = true;
    }
    return out;
}

template <int D, class Level>
SdfSample<D> newton_sample(const Level& lv, const ShapeSpec& s, const Vec<D>& x,
                           const SdfOptions& o) {
    const auto ev = newton_eval<D>(lv, s, x, o);
    SdfSample<D> out;
    out.b = ev.b;
    out.grad = ev.normal;
    out.footpoint_valid = ev.footpoint_ok && !ev.medial;
    out.medial_axis_proximity = ev.medial;
    if (!o.want_hess) return out;
    if (!ev.footpoint_ok)
        throw NonConvergedProjection(
            "footpoint iteration did not converge (medial-axis proximity)");
    // Centered differences of the projected normal field; each probe is a
    // warm-started footpoint solve so only a couple of iterations are spent.
    const double diam = s.diameter();
    const double step = std::cbrt(std::numeric_limits<double>::epsilon()) * diam;
    const double tol_len = o.tol_rel * diam;
    Mat<D> h;
    for (int d = 0; d < D; ++d) {
        Vec<D> grads[2];
        for (int sgn = 0; sgn < 2; ++sgn) {
            const Vec<D> xp = x + (sgn == 0 ? step : -step) * Vec<D>::Unit(d);
            const double lam = (xp - ev.footpoint).dot(lv.gradient(ev.footpoint)) /
                               lv.gradient(ev.footpoint).squaredNorm();
            auto st = newton_project<D>(lv, xp, ev.footpoint, lam, tol_len, o.max_iter);
            if (!st.converged)
                throw NonConvergedProjection("footpoint iteration did not converge (hessian probe)");
            grads[sgn] = lv.gradient(st.p).normalized();
        }
        h.col(d) = (grads[0] - grads[1]) / (2.0 * step);
    }
    out.hess = 0.5 * (h + h.transpose());
    return out;
}

template <int D>
SdfSample<D> eval_dispatch(const ShapeSpec& s, const Vec<D>& x, const SdfOptions& o) {
    const double mtol = medial_tol<D>(s, o);
    switch (s.kind) {
        case ShapeKind::ball:
            return sdf_ball_at<D>(s.center_vec<D>(), s.params[0], x, mtol);
        case ShapeKind::torus:
            if constexpr (D == 3)
                return sdf_torus_at(s.center_vec<3>(), s.params[0], s.params[1], x, mtol);
            else
                throw InvalidArgument("torus requires dim = 3");
        case ShapeKind::capsule:
            return sdf_capsule_at<D>(s, x, mtol);
        case ShapeKind::union_of_balls:
            return sdf_union_at<D>(s, x, mtol);
        case ShapeKind::ellipsoid:
            return newton_sample<D>(EllipsoidLevel<D>(s), s, x, o);
        case ShapeKind::harmonic_sphere:
            return newton_sample<D>(HarmonicLevel<D>(s), s, x, o);
    }
    throw InvalidArgument("unknown shape kind");
}

}  // namespace detail

/// Signed distance with gradient and Hessian. Closed forms where the
/// catalogue admits them, otherwise a damped Newton footpoint solve with a
/// centered-difference Hessian.
template <int D>
SdfSample<D> eval_sdf(const ShapeSpec& s, const Vec<D>& x, const SdfOptions& o = {}) {
    if (s.dim != D) throw InvalidArgument("shape dimension does not match evaluation");
    return detail::eval_dispatch<D>(s, x, o);
}

/// Distance-only fast path.
template <int D>
double eval_b(const ShapeSpec& s, const Vec<D>& x, const SdfOptions& o = {}) {
    SdfOptions oo = o;
    oo.want_hess = false;
    oo.check_medial = false;
    return eval_sdf<D>(s, x, oo).b;
}

/// Distance and gradient without the Hessian.
template <int D>
SdfSample<D> eval_b_grad(const ShapeSpec& s, const Vec<D>& x, const SdfOptions& o = {}) {
    SdfOptions oo = o;
    oo.want_hess = false;
    return eval_sdf<D>(s, x, oo);
}

/// Nearest boundary point p(x) = x - b(x) grad b(x).
template <int D>
Vec<D> project_to_surface(const ShapeSpec& s, const Vec<D>& x, const SdfOptions& o = {}) {
    const SdfSample<D> smp = eval_b_grad<D>(s, x, o);
    if (!smp.footpoint_valid)
        throw NonConvergedProjection("projection requested at a medial-axis point");
    return x - smp.b * smp.grad;
}

/// Centered-difference Hessian of b, independent of any closed form; used to
/// cross-validate the analytic kernels. Step defaults to eps^(1/3) * diameter.
template <int D>
Mat<D> fd_hessian(const ShapeSpec& s, const Vec<D>& x, double step = 0.0) {
    if (step <= 0.0)
        step = std::cbrt(std::numeric_limits<double>::epsilon()) * s.diameter();
    Mat<D> h;
    for (int d = 0; d < D; ++d) {
        const Vec<D> gp = eval_b_grad<D>(s, x + step * Vec<D>::Unit(d)).grad;
        const Vec<D> gm = eval_b_grad<D>(s, x - step * Vec<D>::Unit(d)).grad;
        h.col(d) = (gp - gm) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());
}

}  // namespace tubecalc
