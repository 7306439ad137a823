#pragma once

#include <algorithm>
#include <deque>

#include "tubecalc/functionals.hpp"
#include "tubecalc/surface_pde.hpp"

namespace tubecalc {

enum class SequenceFamily { ellipsoid_to_sphere, harmonic_decay, radius_ramp };

inline const char* to_string(SequenceFamily f) {
    switch (f) {
        case SequenceFamily::ellipsoid_to_sphere: return "ellipsoid_to_sphere";
        case SequenceFamily::harmonic_decay: return "harmonic_decay";
        case SequenceFamily::radius_ramp: return "radius_ramp";
    }
    return "?";
}

inline SequenceFamily sequence_family_from_string(const std::string& s) {
    if (s == "ellipsoid_to_sphere") return SequenceFamily::ellipsoid_to_sphere;
    if (s == "harmonic_decay") return SequenceFamily::harmonic_decay;
    if (s == "radius_ramp") return SequenceFamily::radius_ramp;
    throw ParseError("unknown sequence family '" + s + "'");
}

/// A sequence of admissible shapes converging to a limit shape, with a
/// common certified reach lower bound r0.
struct ShapeSequence {
    ShapeSpec limit;
    std::vector<ShapeSpec> members;
    std::vector<int> index;  // the n of each member
    SequenceFamily family = SequenceFamily::radius_ramp;
    double r0 = 0.0;
};

/// Shipped families, indexed by n: member parameters approach the limit at
/// rate 2^-n.
inline ShapeSequence make_sequence(SequenceFamily family, int n_first, int n_last) {
    if (n_first < 0 || n_last < n_first)
        throw InvalidArgument("sequence needs 0 <= n_first <= n_last");
    ShapeSequence seq;
    seq.family = family;
    const ShapeSpec sphere{ShapeKind::ball, {1.0}, {0, 0, 0}, 3};
    for (int n = n_first; n <= n_last; ++n) {
        const double delta = std::pow(2.0, -n);
        seq.index.push_back(n);
        switch (family) {
            case SequenceFamily::ellipsoid_to_sphere:
                seq.members.push_back(
                    {ShapeKind::ellipsoid, {1.0 + delta, 1.0, 1.0}, {0, 0, 0}, 3});
                break;
            case SequenceFamily::radius_ramp:
                seq.members.push_back({ShapeKind::ball, {1.0 + delta}, {0, 0, 0}, 3});
                break;
            case SequenceFamily::harmonic_decay: {
                ShapeSpec s{ShapeKind::harmonic_sphere, {1.0}, {0, 0, 0}, 3};
                s.params.resize(1 + harmonics::coeff_count_3d, 0.0);
                s.params[1 + 3 + 2] = 0.20 * delta;   // (2, 0)
                s.params[1 + 8 + 4] = 0.12 * delta;   // (3, 1)
                s.params[1 + 15 + 2] = 0.08 * delta;  // (4, -2)
                seq.members.push_back(std::move(s));
                break;
            }
        }
    }
    seq.limit = sphere;
    switch (family) {
        case SequenceFamily::ellipsoid_to_sphere:
            // smallest curvature radius of the widest member, b^2 / a
            seq.r0 = 0.95 / (1.0 + std::pow(2.0, -n_first));
            break;
        case SequenceFamily::radius_ramp:
            seq.r0 = 0.95;
            break;
        case SequenceFamily::harmonic_decay:
            seq.r0 = 0.5;
            break;
    }
    return seq;
}

/// Local (d-1)-volume scaling of the projection of the limit boundary onto
/// the member boundary: an orthonormal tangent frame at x is pushed through
/// the member projection by centered differences and its Gram volume taken.
template <int D>
double transport_jacobian(const ShapeSpec& limit, const ShapeSpec& member, const Vec<D>& x,
                          double step = 0.0) {
    if (step <= 0.0) step = 1e-5 * limit.diameter();
    const Vec<D> nu = eval_b_grad<D>(limit, x).grad;
    const auto frame = tangent_frame<D>(nu);
    Eigen::Matrix<double, D, D - 1> pushed;
    int k = 0;
    for (const auto& v : frame) {
        const Vec<D> pp = project_to_surface<D>(member, x + step * v);
        const Vec<D> pm = project_to_surface<D>(member, x - step * v);
        if ((pp - pm).norm() > 50.0 * step)
            throw ProjectionNotInjective(
                "projected frame points disagree; member projection not single-valued here");
        pushed.col(k++) = (pp - pm) / (2.0 * step);
    }
    const Eigen::Matrix<double, D - 1, D - 1> gram = pushed.transpose() * pushed;
    return std::sqrt(gram.determinant());
}

/// Correction matrix relating tangential gradients on the limit and member
/// boundaries under composition with the projection map, assembled from the
/// two signed distance samples at a limit boundary point:
///   C = (gn gn^T - Id) gi gi^T + bn Hn (gi gi^T - Id).
template <int D>
Mat<D> cn_matrix(const ShapeSpec& limit, const ShapeSpec& member, const Vec<D>& x) {
    const SdfSample<D> si = eval_b_grad<D>(limit, x);
    const SdfSample<D> sn = eval_sdf<D>(member, x);
    const Mat<D> pi = si.grad * si.grad.transpose();
    const Mat<D> pn = sn.grad * sn.grad.transpose();
    const Mat<D> eye = Mat<D>::Identity();
    return (pn - eye) * pi + sn.b * sn.hess * (pi - eye);
}

/// Per-member metrics of the sequence.
struct ConvergenceRow {
    int n = 0;
    double sup_b = 0.0;
    double sup_gradb = 0.0;
    double hess_sup = 0.0;
    double perim_gap = 0.0;
    double vol_gap = 0.0;
    double jac_tau_dev = 0.0;
    double cn_norm = 0.0;
    double F1 = 0.0;
    double F2 = 0.0;
    int inside_components = 0;
};

struct SequenceAssertion {
    std::string lemma;  // checked property, e.g. "perimeter_continuity"
    bool passed = false;
    double value = 0.0;
    double threshold = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    double perim_limit = 0.0;
    double vol_limit = 0.0;
    double F1_limit = 0.0;
    double F2_limit = 0.0;
    double r0 = 0.0;
    double hess_bound = 0.0;  // 2/(r0 - r), the uniform Hessian bound reported
    std::vector<SequenceAssertion> assertions;

    bool all_passed() const {
        return std::all_of(assertions.begin(), assertions.end(),
                           [](const SequenceAssertion& a) { return a.passed; });
    }
};

/// Thresholds of the numerical convergence assertions. Zero entries are
/// resolved relative to the limit values (1% of perimeter and volume).
struct SequenceThresholds {
    double perim_gap = 0.0;
    double vol_gap = 0.0;
    double jac_dev = 0.02;
    double cn_norm = 0.05;
    double lsc_f1 = 0.5;
    double lsc_f2 = 0.05;
};

struct SequenceConfig {
    IntegrandSpec f1 = IntegrandSpec::willmore();
    bool track_f2 = true;
    std::function<double(const Vec<3>&)> f2_data = [](const Vec<3>& x) { return x[2]; };
    int sup_samples = 100000;    // box sample for sup |b_n - b|
    int surface_samples = 1024;  // boundary sample for jac / cn sups
    int tube_samples = 20000;    // tube sample for gradient sups
    std::uint64_t seed = 0;
    double eps_normal = 1.0;
    double tol_cg = 1e-8;
};

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

/// first-third vs last-third medians; "eventually decreasing" tolerant to
/// quadrature noise at fixed spacing and to exact ties (constant sequences)
inline bool eventually_decreasing(const std::vector<double>& v) {
    if (v.size() < 2) return true;
    const std::size_t third = std::max<std::size_t>(1, v.size() / 3);
    std::vector<double> first(v.begin(), v.begin() + third);
    std::vector<double> last(v.end() - third, v.end());
    const double m0 = median(first), m1 = median(last);
    const double slack = 1e-14 + 1e-9 * std::abs(m0);
    return m1 < m0 + slack && std::abs(v.back()) < std::abs(v.front()) + slack;
}

template <int D>
int count_inside_components(const ShapeSpec& shape, double spacing) {
    const AmbientBox<D> box = shape.bounding_box<D>(2.0 * spacing);
    const GridSpec<D> grid = GridSpec<D>::cover(box, spacing);
    const std::int64_t n = grid.size();
    std::vector<std::int8_t> inside(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) inside[i] = eval_b<D>(shape, grid.point(i)) < 0.0;
    std::vector<std::int8_t> seen(static_cast<std::size_t>(n), 0);
    int comps = 0;
    std::deque<std::int64_t> queue;
    for (std::int64_t start = 0; start < n; ++start) {
        if (!inside[start] || seen[start]) continue;
        ++comps;
        seen[start] = 1;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::int64_t cur = queue.front();
            queue.pop_front();
            const auto idx = grid.unflatten(cur);
            for (int d = 0; d < D; ++d) {
                for (int side = -1; side <= 1; side += 2) {
                    auto jdx = idx;
                    jdx[d] += side;
                    if (!grid.in_bounds(jdx)) continue;
                    const std::int64_t j = grid.flatten(jdx);
                    if (inside[j] && !seen[j]) {
                        seen[j] = 1;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    return comps;
}

}  // namespace detail

/// Metrics of one member against the limit. Interior distance evaluations
/// use the globally cross-checked footpoint path so sup norms are not
/// polluted by wrong-basin projections.
template <int D>
ConvergenceRow rconv_metrics(const ShapeSequence& seq, std::size_t member_idx,
                             const QuadParams& qp, const SequenceConfig& cfg,
                             const TubeQuadrature<D>* limit_tube, double perim_limit,
                             double vol_limit) {
    const ShapeSpec& member = seq.members.at(member_idx);
    const ShapeSpec& limit = seq.limit;
    ConvergenceRow row;
    row.n = seq.index.at(member_idx);

    SdfOptions robust;
    robust.want_hess = false;
    robust.global_scan = true;

    // sup over the container box of |b_n - b_inf|: a fixed low-discrepancy
    // sample plus the tube nodes of the limit, which densify the scan where
    // the gap peaks
    const AmbientBox<D> box = limit.bounding_box<D>(0.5 * limit.diameter());
    {
        const std::size_t extra = limit_tube ? limit_tube->nodes.size() : 0;
        std::vector<double> vals(static_cast<std::size_t>(cfg.sup_samples) + extra);
        parallel_for(vals.size(), qp.threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                Vec<D> y;
                if (i < static_cast<std::size_t>(cfg.sup_samples)) {
                    double u[3];
                    halton_point(i, cfg.seed, D, u);
                    y = box.lerp(u);
                } else {
                    y = limit_tube->nodes[i - static_cast<std::size_t>(cfg.sup_samples)].y;
                }
                vals[i] = std::abs(eval_sdf<D>(member, y, robust).b -
                                   eval_sdf<D>(limit, y, robust).b);
            }
        });
        row.sup_b = *std::max_element(vals.begin(), vals.end());
    }

    // sup over a tube around the limit boundary of the gradient gap and the
    // member Hessian norm (uniform bound reported, not a convergence metric)
    {
        const double r = 0.5 * seq.r0;
        std::vector<double> gvals, hvals;
        std::uint64_t i = 0;
        const std::uint64_t budget = 400ull * static_cast<std::uint64_t>(cfg.tube_samples);
        while (static_cast<int>(gvals.size()) < cfg.tube_samples && i < budget) {
            double u[3];
            halton_point(i++, cfg.seed + 1, D, u);
            const Vec<D> y = box.lerp(u);
            if (std::abs(eval_b<D>(limit, y)) >= r) continue;
            const SdfSample<D> sn = eval_sdf<D>(member, y);
            const SdfSample<D> si = eval_b_grad<D>(limit, y, robust);
            gvals.push_back((sn.grad - si.grad).norm());
            if (std::abs(sn.b) < r) {
                // the Lipschitz bound lives on the member's own tube
                const Eigen::SelfAdjointEigenSolver<Mat<D>> eig(sn.hess);
                hvals.push_back(eig.eigenvalues().cwiseAbs().maxCoeff());
            }
        }
        row.sup_gradb = gvals.empty() ? 0.0 : *std::max_element(gvals.begin(), gvals.end());
        row.hess_sup = hvals.empty() ? 0.0 : *std::max_element(hvals.begin(), hvals.end());
    }

    // boundary sups of |Jac(tau) - 1| and the gradient correction norm
    {
        const auto pts = sample_boundary<D>(limit, cfg.surface_samples, cfg.seed);
        std::vector<double> jdev(pts.size()), cn(pts.size());
        parallel_for(pts.size(), qp.threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                jdev[i] = std::abs(transport_jacobian<D>(limit, member, pts[i]) - 1.0);
                const Mat<D> c = cn_matrix<D>(limit, member, pts[i]);
                cn[i] = c.jacobiSvd().singularValues()[0];
            }
        });
        row.jac_tau_dev = *std::max_element(jdev.begin(), jdev.end());
        row.cn_norm = *std::max_element(cn.begin(), cn.end());
    }

    // functionals
    {
        TubeOptions to;
        to.threads = qp.threads;
        to.medial_check = qp.medial_check;
        to.subcell_membership = qp.subcell;
        auto tube = std::make_shared<const TubeQuadrature<D>>(
            build_tube<D>(member, qp.h, qp.spacing, to));
        row.perim_gap = perimeter<D>(*tube, qp.threads) - perim_limit;
        VolumeOptions vo;
        vo.threads = qp.threads;
        vo.subcell = qp.subcell ? 4 : 0;
        row.vol_gap = volume<D>(member, qp.spacing, vo) - vol_limit;
        row.F1 = eval_F1<D>(*tube, cfg.f1, qp.threads);
        if (cfg.track_f2) {
            if constexpr (D == 3) {
                LbParams lp;
                lp.eps_normal = cfg.eps_normal;
                lp.tol_cg = cfg.tol_cg;
                lp.threads = qp.threads;
                const auto [field, rep] = solve_lb<D>(tube, cfg.f2_data, lp);
                row.F2 = eval_F2<D>(field,
                                    [](const Vec<D>&, const Vec<D>&, double, const Vec<D>& gt) {
                                        return gt.squaredNorm();
                                    },
                                    cfg.eps_normal, qp.threads);
            }
        }
    }

    row.inside_components = detail::count_inside_components<D>(
        member, std::max(2.0 * qp.spacing, limit.diameter() / 64.0));
    return row;
}

/// Full sequence experiment: computes per-member metrics and evaluates the
/// convergence and lower-semicontinuity assertions.
template <int D = 3>
ConvergenceReport run_sequence_experiment(const ShapeSequence& seq, const QuadParams& qp0,
                                          const SequenceConfig& cfg = {},
                                          const SequenceThresholds& thr0 = {}) {
    QuadParams qp = qp0;
    if (qp.h <= 0.0) qp.h = 0.25 * seq.r0;
    if (qp.spacing <= 0.0) qp.spacing = qp.h / 5.0;

    // reach certification of every member and the limit at the family r0
    ReachOptions ro;
    ro.seed = cfg.seed;
    ro.threads = qp.threads;
    ConvergenceReport rep;
    rep.r0 = seq.r0;
    rep.hess_bound = 2.0 / (seq.r0 - 0.5 * seq.r0);
    double worst_margin = std::numeric_limits<double>::max();
    {
        auto check = [&](const ShapeSpec& s) {
            const auto cert = uniform_ball_check<D>(s, seq.r0, ro);
            worst_margin = std::min(worst_margin, cert.worst_margin);
            return cert.passed;
        };
        bool ok = check(seq.limit);
        for (const auto& m : seq.members) ok = check(m) && ok;
        rep.assertions.push_back(
            {"reach_certification", ok, worst_margin, -1e-6 * seq.limit.diameter()});
    }

    TubeOptions to;
    to.threads = qp.threads;
    to.medial_check = qp.medial_check;
    to.subcell_membership = qp.subcell;
    auto limit_tube = std::make_shared<const TubeQuadrature<D>>(
        build_tube<D>(seq.limit, qp.h, qp.spacing, to));
    rep.perim_limit = perimeter<D>(*limit_tube, qp.threads);
    VolumeOptions vo;
    vo.threads = qp.threads;
    vo.subcell = qp.subcell ? 4 : 0;
    rep.vol_limit = volume<D>(seq.limit, qp.spacing, vo);
    rep.F1_limit = eval_F1<D>(*limit_tube, cfg.f1, qp.threads);
    if (cfg.track_f2) {
        LbParams lp;
        lp.eps_normal = cfg.eps_normal;
        lp.tol_cg = cfg.tol_cg;
        lp.threads = qp.threads;
        const auto [field, r] = solve_lb<D>(limit_tube, cfg.f2_data, lp);
        rep.F2_limit = eval_F2<D>(field,
                                  [](const Vec<D>&, const Vec<D>&, double, const Vec<D>& gt) {
                                      return gt.squaredNorm();
                                  },
                                  cfg.eps_normal, qp.threads);
    }

    for (std::size_t k = 0; k < seq.members.size(); ++k)
        rep.rows.push_back(rconv_metrics<D>(seq, k, qp, cfg, limit_tube.get(),
                                            rep.perim_limit, rep.vol_limit));

    SequenceThresholds thr = thr0;
    if (thr.perim_gap <= 0.0) thr.perim_gap = 0.01 * std::abs(rep.perim_limit);
    if (thr.vol_gap <= 0.0) thr.vol_gap = 0.01 * std::abs(rep.vol_limit);

    auto column = [&](auto getter) {
        std::vector<double> v;
        for (const auto& r : rep.rows) v.push_back(std::abs(getter(r)));
        return v;
    };
    const auto perims = column([](const ConvergenceRow& r) { return r.perim_gap; });
    const auto vols = column([](const ConvergenceRow& r) { return r.vol_gap; });
    const auto jacs = column([](const ConvergenceRow& r) { return r.jac_tau_dev; });
    const auto cns = column([](const ConvergenceRow& r) { return r.cn_norm; });

    rep.assertions.push_back({"perimeter_continuity",
                              detail::eventually_decreasing(perims) &&
                                  perims.back() < thr.perim_gap,
                              perims.back(), thr.perim_gap});
    rep.assertions.push_back({"volume_continuity",
                              detail::eventually_decreasing(vols) && vols.back() < thr.vol_gap,
                              vols.back(), thr.vol_gap});
    rep.assertions.push_back({"transport_jacobian_to_one",
                              detail::eventually_decreasing(jacs) && jacs.back() < thr.jac_dev,
                              jacs.back(), thr.jac_dev});
    rep.assertions.push_back(
        {"gradient_correction_to_zero", cns.back() < thr.cn_norm, cns.back(), thr.cn_norm});

    double lsc_f1_gap = std::numeric_limits<double>::max();
    for (const auto& r : rep.rows) lsc_f1_gap = std::min(lsc_f1_gap, r.F1 - rep.F1_limit);
    rep.assertions.push_back(
        {"lsc_F1", lsc_f1_gap >= -thr.lsc_f1, lsc_f1_gap, -thr.lsc_f1});
    if (cfg.track_f2) {
        double lsc_f2_gap = std::numeric_limits<double>::max();
        for (const auto& r : rep.rows) lsc_f2_gap = std::min(lsc_f2_gap, r.F2 - rep.F2_limit);
        rep.assertions.push_back(
            {"lsc_F2", lsc_f2_gap >= -thr.lsc_f2, lsc_f2_gap, -thr.lsc_f2});
    }

    // tube inclusions: sampled points of the shrunken limit tube stay inside
    // the member tube from some member onward; the onset must be monotone
    // and the last member must satisfy the inclusion
    {
        const double h = 0.2 * seq.r0;
        const double t = h * h;
        const AmbientBox<D> box = seq.limit.bounding_box<D>(2.0 * h);
        std::vector<bool> pass(seq.members.size(), false);
        double worst_last = 0.0;
        for (std::size_t k = 0; k < seq.members.size(); ++k) {
            int found = 0;
            std::uint64_t i = 0;
            bool ok = true;
            double worst = 0.0;
            while (found < 2000 && i < 2000000) {
                double u[3];
                halton_point(i++, cfg.seed + 2, D, u);
                const Vec<D> y = box.lerp(u);
                if (std::abs(eval_b<D>(seq.limit, y)) > h - t) continue;
                ++found;
                const double bn = std::abs(eval_b<D>(seq.members[k], y));
                worst = std::max(worst, bn);
                if (bn > h) ok = false;
            }
            pass[k] = ok;
            if (k + 1 == seq.members.size()) worst_last = worst;
        }
        bool monotone_onset = true;
        for (std::size_t k = 1; k < pass.size(); ++k)
            if (pass[k - 1] && !pass[k]) monotone_onset = false;
        rep.assertions.push_back(
            {"tube_inclusions", pass.back() && monotone_onset, worst_last, h});
    }
    return rep;
}

}  // namespace tubecalc
