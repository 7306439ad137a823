#pragma once

#include <cstdint>
#include <vector>

#include "tubecalc/sdf.hpp"
#include "tubecalc/util.hpp"

namespace tubecalc {

/// Outcome of a sampled uniform-ball check at half-width h. The certificate
/// is probabilistic in the adversarial sense: it inspects n_samples
/// quasi-uniform boundary points, not every point.
template <int D>
struct ReachCertificate {
    double h_tested = 0.0;
    bool passed = false;
    Vec<D> worst_point = Vec<D>::Zero();
    double worst_margin = 0.0;
    int n_samples = 0;
};

struct ReachOptions {
    int n_samples = 0;          // 0: 4096 in 3-d, 512 in 2-d
    std::uint64_t seed = 0;
    double tol_rel = 1e-6;      // reach tolerance relative to shape diameter
    int threads = 1;
};

namespace detail {

template <int D>
int default_reach_samples() {
    return D == 3 ? 4096 : 512;
}

}  // namespace detail

/// Quasi-uniform boundary points: footpoints of low-discrepancy box points
/// kept near the surface. Deterministic for a fixed seed.
template <int D>
std::vector<Vec<D>> sample_boundary(const ShapeSpec& shape, int n, std::uint64_t seed = 0) {
    const AmbientBox<D> box = shape.bounding_box<D>(0.05 * shape.diameter());
    const double keep = 0.25 * shape.diameter();
    std::vector<Vec<D>> pts;
    pts.reserve(static_cast<std::size_t>(n));
    std::uint64_t i = 0;
    const std::uint64_t budget = 4000ull * static_cast<std::uint64_t>(n) + 100000ull;
    while (static_cast<int>(pts.size()) < n && i < budget) {
        double unit[3];
        halton_point(i++, seed, D, unit);
        const Vec<D> y = box.lerp(unit);
        const SdfSample<D> s = eval_b_grad<D>(shape, y);
        if (!s.footpoint_valid || std::abs(s.b) > keep) continue;
        pts.push_back(y - s.b * s.grad);
    }
    if (static_cast<int>(pts.size()) < n)
        throw NonConvergedProjection("boundary sampling exhausted its candidate budget");
    return pts;
}

namespace detail {

/// Signed-distance form of the two tangent-ball inclusions at x: the inside
/// ball of radius h fits iff b(x - h d) <= -h, the outside ball iff
/// b(x + h d) >= h. Returns the smaller slack of the two.
template <int D>
double ball_margin(const ShapeSpec& shape, const Vec<D>& x, const Vec<D>& d, double h) {
    SdfOptions o;
    o.global_scan = true;  // test centers sit on normal rays where radial
                           // Newton starts are blind to competing footpoints
    const double inside = -h - eval_b<D>(shape, x - h * d, o);
    const double outside = eval_b<D>(shape, x + h * d, o) - h;
    return std::min(inside, outside);
}

template <int D>
ReachCertificate<D> check_at(const ShapeSpec& shape, double h,
                             const std::vector<Vec<D>>& pts, const ReachOptions& opt) {
    const double tol = opt.tol_rel * shape.diameter();
    const std::size_t n = pts.size();
    std::vector<double> margins(n);
    std::vector<std::uint8_t> bad_normal(n, 0);
    parallel_for(n, opt.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const SdfSample<D> s = eval_b_grad<D>(shape, pts[i]);
            if (std::abs(s.grad.norm() - 1.0) > 1e-6) {
                bad_normal[i] = 1;
                margins[i] = 0.0;
                continue;
            }
            margins[i] = ball_margin<D>(shape, pts[i], s.grad, h);
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        if (bad_normal[i])
            throw DegenerateNormal("gradient is not unit at a boundary sample");
    ReachCertificate<D> cert;
    cert.h_tested = h;
    cert.n_samples = static_cast<int>(n);
    cert.worst_margin = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < n; ++i) {
        if (margins[i] < cert.worst_margin) {  // strict: ties keep first index
            cert.worst_margin = margins[i];
            cert.worst_point = pts[i];
        }
    }
    cert.passed = cert.worst_margin >= -tol;
    return cert;
}

}  // namespace detail

/// Samples boundary points and verifies the interior/exterior tangent-ball
/// inclusions of radius h at each of them.
template <int D>
ReachCertificate<D> uniform_ball_check(const ShapeSpec& shape, double h,
                                       const ReachOptions& opt = {}) {
    if (!(h > 0.0)) throw InvalidArgument("uniform ball check requires h > 0");
    ReachOptions o = opt;
    if (o.n_samples <= 0) o.n_samples = detail::default_reach_samples<D>();
    if (o.n_samples < 100) throw InvalidArgument("uniform ball check needs >= 100 samples");
    const auto pts = sample_boundary<D>(shape, o.n_samples, o.seed);
    return detail::check_at<D>(shape, h, pts, o);
}

/// Largest h passing the uniform-ball check, located by bisection on
/// [tol_bisect, diam]. A fixed boundary sample is reused across the ladder so
/// the estimate is deterministic and monotone.
template <int D>
double estimate_reach(const ShapeSpec& shape, double tol_bisect, const ReachOptions& opt = {}) {
    if (!(tol_bisect > 0.0)) throw InvalidArgument("estimate_reach requires tol_bisect > 0");
    ReachOptions o = opt;
    if (o.n_samples <= 0) o.n_samples = detail::default_reach_samples<D>();
    const auto pts = sample_boundary<D>(shape, o.n_samples, o.seed);
    double lo = tol_bisect;
    double hi = shape.diameter();
    if (!detail::check_at<D>(shape, lo, pts, o).passed) return 0.0;
    if (detail::check_at<D>(shape, hi, pts, o).passed) return hi;
    while (hi - lo > tol_bisect) {
        const double mid = 0.5 * (lo + hi);
        if (detail::check_at<D>(shape, mid, pts, o).passed)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace tubecalc
