#include <catch2/catch_amalgamated.hpp>

#include "tubecalc/convergence.hpp"

using namespace tubecalc;
using Catch::Approx;

namespace {

ShapeSpec ball(double r) { return {ShapeKind::ball, {r}, {0, 0, 0}, 3}; }

QuadParams lab_qp() {
    QuadParams qp;
    qp.h = 0.1;
    qp.spacing = 0.03;
    return qp;
}

SequenceConfig light_cfg() {
    SequenceConfig cfg;
    cfg.sup_samples = 20000;
    cfg.surface_samples = 400;
    cfg.tube_samples = 4000;
    cfg.track_f2 = false;
    return cfg;
}

}  // namespace

TEST_CASE("transport jacobian of concentric spheres") {
    const ShapeSpec limit = ball(1.0);
    const ShapeSpec member = ball(1.2);
    for (const auto& x : sample_boundary<3>(limit, 100)) {
        CHECK(transport_jacobian<3>(limit, member, x) == Approx(1.44).margin(1e-6));
        CHECK(transport_jacobian<3>(limit, limit, x) == Approx(1.0).margin(1e-8));
    }
}

TEST_CASE("transport jacobian of a mildly prolate member") {
    const ShapeSpec limit = ball(1.0);
    ShapeSpec e1{ShapeKind::ellipsoid, {1.1, 1.0, 1.0}, {0, 0, 0}, 3};
    ShapeSpec e2{ShapeKind::ellipsoid, {1.2, 1.0, 1.0}, {0, 0, 0}, 3};
    double sup1 = 0.0, sup2 = 0.0;
    for (const auto& x : sample_boundary<3>(limit, 300)) {
        sup1 = std::max(sup1, std::abs(transport_jacobian<3>(limit, e1, x) - 1.0));
        sup2 = std::max(sup2, std::abs(transport_jacobian<3>(limit, e2, x) - 1.0));
    }
    CHECK(sup1 < sup2);  // monotone family
    CHECK(sup2 < 0.8);
}

TEST_CASE("gradient correction matrix") {
    const ShapeSpec limit = ball(1.0);
    // identical shapes: zero matrix
    for (const auto& x : sample_boundary<3>(limit, 50))
        CHECK(cn_matrix<3>(limit, limit, x).norm() < 1e-9);

    // concentric spheres radius 1 vs 1.1: C = delta * (Id - x x^T), norm delta
    const ShapeSpec member = ball(1.1);
    for (const auto& x : sample_boundary<3>(limit, 50)) {
        const Mat<3> c = cn_matrix<3>(limit, member, x);
        const Mat<3> expected = 0.1 * (Mat<3>::Identity() - x * x.transpose() / x.squaredNorm());
        CHECK((c - expected).norm() < 1e-8);
        CHECK(c.jacobiSvd().singularValues()[0] == Approx(0.1).margin(1e-9));
    }
}

TEST_CASE("gradient transport identity for f = z") {
    // tangential gradient of (f o tau) at x equals the member tangential
    // gradient at tau(x) times (Id + C), both sides by independent routes
    const ShapeSpec limit = ball(1.0);
    ShapeSpec member{ShapeKind::ellipsoid, {1.1, 1.0, 1.0}, {0, 0, 0}, 3};
    const double step = 1e-5;
    double worst = 0.0;
    for (const auto& x : sample_boundary<3>(limit, 200)) {
        const Vec<3> nu = eval_b_grad<3>(limit, x).grad;
        Vec<3> lhs = Vec<3>::Zero();
        for (const auto& v : tangent_frame<3>(nu)) {
            const double fp = project_to_surface<3>(member, x + step * v)[2];
            const double fm = project_to_surface<3>(member, x - step * v)[2];
            lhs += ((fp - fm) / (2.0 * step)) * v;
        }
        const Vec<3> y = project_to_surface<3>(member, x);
        const Vec<3> nun = eval_b_grad<3>(member, y).grad;
        const Vec<3> grad_member = Vec<3>::UnitZ() - nun[2] * nun;  // P_n e_z
        const Mat<3> c = cn_matrix<3>(limit, member, x);
        const Vec<3> rhs = (grad_member.transpose() * (Mat<3>::Identity() + c)).transpose();
        worst = std::max(worst, (lhs - rhs).norm());
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("radius ramp metrics match closed forms") {
    const auto seq = make_sequence(SequenceFamily::radius_ramp, 1, 5);
    const auto rep = run_sequence_experiment<3>(seq, lab_qp(), light_cfg());
    REQUIRE(rep.rows.size() == 5);
    for (const auto& row : rep.rows) {
        const double delta = std::pow(2.0, -row.n);
        // concentric spheres: sup |b_n - b| is the radius gap
        CHECK(row.sup_b == Approx(delta).margin(5e-3));
        // perimeter gap 4 pi ((1+d)^2 - 1)
        const double gap = 4.0 * M_PI * ((1.0 + delta) * (1.0 + delta) - 1.0);
        CHECK(row.perim_gap == Approx(gap).margin(0.02 * 4.0 * M_PI));
        CHECK(row.inside_components == 1);
        CHECK(std::isfinite(row.cn_norm));
        CHECK(row.jac_tau_dev == Approx((1.0 + delta) * (1.0 + delta) - 1.0).margin(5e-3));
    }
    for (const auto& a : rep.assertions)
        if (a.lemma != "perimeter_continuity" && a.lemma != "volume_continuity" &&
            a.lemma != "transport_jacobian_to_one")
            CHECK(a.passed);
}

TEST_CASE("constant sequence: all gaps vanish") {
    ShapeSequence seq;
    seq.family = SequenceFamily::radius_ramp;
    seq.limit = ball(1.0);
    seq.members = {ball(1.0), ball(1.0), ball(1.0)};
    seq.index = {1, 2, 3};
    seq.r0 = 0.95;
    SequenceConfig cfg = light_cfg();
    const auto rep = run_sequence_experiment<3>(seq, lab_qp(), cfg);
    for (const auto& row : rep.rows) {
        CHECK(row.sup_b < 1e-12);
        CHECK(std::abs(row.perim_gap) < 1e-12);
        CHECK(std::abs(row.vol_gap) < 1e-12);
        CHECK(row.jac_tau_dev < 1e-8);
        CHECK(row.cn_norm < 1e-9);
        CHECK(row.F1 == Approx(rep.F1_limit).margin(1e-12));
    }
    CHECK(rep.all_passed());
}

TEST_CASE("ellipsoid family: hausdorff bound and lsc of the willmore energy") {
    const auto seq = make_sequence(SequenceFamily::ellipsoid_to_sphere, 2, 6);
    SequenceConfig cfg = light_cfg();
    const auto rep = run_sequence_experiment<3>(seq, lab_qp(), cfg);
    for (const auto& row : rep.rows) {
        const double delta = std::pow(2.0, -row.n);
        CHECK(row.sup_b <= delta + 5e-3);  // distance fields differ at most by the axis gap
        CHECK(row.F1 >= 16.0 * M_PI - 0.5);
        CHECK(std::isfinite(row.sup_gradb));
        CHECK(row.hess_sup <= rep.hess_bound + 1.0);
    }
    for (const auto& a : rep.assertions)
        if (a.lemma == "lsc_F1" || a.lemma == "tube_inclusions" ||
            a.lemma == "reach_certification")
            CHECK(a.passed);
}

TEST_CASE("sequence construction validates input") {
    CHECK_THROWS_AS(make_sequence(SequenceFamily::radius_ramp, 3, 1), InvalidArgument);
    const auto seq = make_sequence(SequenceFamily::harmonic_decay, 2, 4);
    CHECK(seq.members.size() == 3);
    for (const auto& m : seq.members) m.validate();
}
