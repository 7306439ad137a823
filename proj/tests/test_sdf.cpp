#include <catch2/catch_amalgamated.hpp>

#include "tubecalc/grid.hpp"
#include "tubecalc/sdf.hpp"

#include "oracles.hpp"

using namespace tubecalc;
using Catch::Approx;

namespace {

ShapeSpec unit_ball() { return {ShapeKind::ball, {1.0}, {0, 0, 0}, 3}; }

ShapeSpec torus_2_05() { return {ShapeKind::torus, {2.0, 0.5}, {0, 0, 0}, 3}; }

ShapeSpec ellipsoid(double a, double b, double c) {
    return {ShapeKind::ellipsoid, {a, b, c}, {0, 0, 0}, 3};
}

ShapeSpec harmonic_bump() {
    // base radius 1, small degree-2 and degree-3 perturbation
    ShapeSpec s{ShapeKind::harmonic_sphere, {1.0}, {0, 0, 0}, 3};
    s.params.resize(1 + harmonics::coeff_count_3d, 0.0);
    s.params[1 + 3 + 2] = 0.08;   // (l=2, m=0)
    s.params[1 + 8 + 4] = 0.05;   // (l=3, m=1)
    return s;
}

/// Quasi-uniform points in the tube |b| < h.
template <int D>
std::vector<Vec<D>> tube_points(const ShapeSpec& s, double h, int n, std::uint64_t seed = 7) {
    const AmbientBox<D> box = s.bounding_box<D>(h);
    std::vector<Vec<D>> pts;
    std::uint64_t i = 0;
    while (static_cast<int>(pts.size()) < n) {
        double u[3];
        halton_point(i++, seed, D, u);
        const Vec<D> y = box.lerp(u);
        if (std::abs(eval_b<D>(s, y)) < h) pts.push_back(y);
    }
    return pts;
}

}  // namespace

TEST_CASE("ball signed distance: value, gradient, curvature") {
    const ShapeSpec s = unit_ball();
    const auto far = eval_sdf<3>(s, Vec<3>(0, 0, 2));
    CHECK(far.b == Approx(1.0).margin(1e-14));
    CHECK((far.grad - Vec<3>(0, 0, 1)).norm() < 1e-14);

    const auto on = eval_sdf<3>(s, Vec<3>(0, 0, 1));
    CHECK(on.b == Approx(0.0).margin(1e-14));
    Eigen::SelfAdjointEigenSolver<Mat<3>> eig(on.hess);
    // sphere of radius 1: tangential eigenvalues 1, normal eigenvalue 0
    CHECK(eig.eigenvalues()[0] == Approx(0.0).margin(1e-12));
    CHECK(eig.eigenvalues()[1] == Approx(1.0).margin(1e-12));
    CHECK(eig.eigenvalues()[2] == Approx(1.0).margin(1e-12));
}

TEST_CASE("torus signed distance at the outer equator") {
    const ShapeSpec s = torus_2_05();
    const auto smp = eval_sdf<3>(s, Vec<3>(2.5, 0, 0));
    CHECK(smp.b == Approx(0.0).margin(1e-14));
    Eigen::SelfAdjointEigenSolver<Mat<3>> eig(smp.hess);
    // principal curvatures 1/r = 2 and 1/(R+r) = 0.4, zero along the normal
    CHECK(eig.eigenvalues()[0] == Approx(0.0).margin(1e-12));
    CHECK(eig.eigenvalues()[1] == Approx(0.4).margin(1e-12));
    CHECK(eig.eigenvalues()[2] == Approx(2.0).margin(1e-12));
    // the zero eigenvalue sits along grad
    int zero_idx = 0;
    CHECK(std::abs(eig.eigenvectors().col(zero_idx).dot(smp.grad)) == Approx(1.0).margin(1e-10));
}

TEST_CASE("projection to surface") {
    CHECK((project_to_surface<3>(unit_ball(), Vec<3>(0, 0, 2)) - Vec<3>(0, 0, 1)).norm() <
          1e-12);
    CHECK((project_to_surface<3>(unit_ball(), Vec<3>(0, 0, 0.5)) - Vec<3>(0, 0, 1)).norm() <
          1e-12);
    CHECK((project_to_surface<3>(ellipsoid(2, 1, 1), Vec<3>(3, 0, 0)) - Vec<3>(2, 0, 0))
              .norm() < 1e-9);
}

TEST_CASE("projection is idempotent on the tube") {
    for (const ShapeSpec& s : {unit_ball(), torus_2_05(), ellipsoid(1.3, 1.0, 0.8)}) {
        const double tol = 1e-10 * s.diameter();
        for (const auto& y : tube_points<3>(s, 0.1, 50)) {
            const Vec<3> p = project_to_surface<3>(s, y);
            const Vec<3> pp = project_to_surface<3>(s, p);
            CHECK((pp - p).norm() < tol);
        }
    }
}

TEST_CASE("grid sampling covers the box and classifies cells") {
    const AmbientBox<3> box{Vec<3>(-1.5, -1.5, -1.5), Vec<3>(1.5, 1.5, 1.5)};
    const auto g = sample_grid<3>(unit_ball(), box, 0.5, {});
    REQUIRE(g.grid.size() == 7 * 7 * 7);
    const std::int64_t center = g.grid.flatten({3, 3, 3});
    CHECK(g.b[static_cast<std::size_t>(center)] == Approx(-1.0).margin(1e-14));
    CHECK(g.cls[static_cast<std::size_t>(center)] == CellClass::inside);
    CHECK_THROWS_AS(sample_grid<3>(unit_ball(), box, 0.0, {}), GridTooLarge);
    GridOptions tight;
    tight.max_nodes = 10;
    CHECK_THROWS_AS(sample_grid<3>(unit_ball(), box, 0.5, tight), GridTooLarge);
}

TEST_CASE("inside-cell counting approximates the ball volume") {
    const double v = volume<3>(unit_ball(), 0.05);
    CHECK(v == Approx(4.0 * M_PI / 3.0).epsilon(0.02));
    CHECK_THROWS_AS(volume<3>(unit_ball(), 0.0), GridTooLarge);
}

TEST_CASE("eikonal property on tube samples") {
    for (const ShapeSpec& s : {unit_ball(), torus_2_05()}) {
        for (const auto& y : tube_points<3>(s, 0.2, 2000)) {
            const auto smp = eval_b_grad<3>(s, y);
            CHECK(std::abs(smp.grad.norm() - 1.0) < 1e-6);
        }
    }
    // Newton shapes: the returned normal is unit by construction; the eikonal
    // content is that it matches the footpoint ray direction.
    for (const ShapeSpec& s : {ellipsoid(1.3, 1.0, 0.8), harmonic_bump()}) {
        const double dhess = std::cbrt(std::numeric_limits<double>::epsilon()) * s.diameter();
        for (const auto& y : tube_points<3>(s, 0.1, 200)) {
            const auto smp = eval_b_grad<3>(s, y);
            CHECK(std::abs(smp.grad.norm() - 1.0) < 10.0 * dhess);
            if (std::abs(smp.b) > 1e-3) {
                const Vec<3> ray = (y - project_to_surface<3>(s, y)) / smp.b;
                CHECK((ray - smp.grad).norm() < 1e-6);
            }
        }
    }
}

TEST_CASE("normal rays are flat directions of the Hessian") {
    for (const ShapeSpec& s :
         {unit_ball(), torus_2_05(), ellipsoid(1.3, 1.0, 0.8), harmonic_bump()}) {
        for (const auto& y : tube_points<3>(s, 0.1, 60)) {
            const auto smp = eval_sdf<3>(s, y);
            CHECK((smp.hess * smp.grad).norm() < 1e-4);
            CHECK((smp.hess - smp.hess.transpose()).norm() < 1e-12);
        }
    }
}

TEST_CASE("finite-difference Hessian matches closed forms") {
    for (const ShapeSpec& s : {unit_ball(), torus_2_05()}) {
        for (const auto& y : tube_points<3>(s, 0.15, 40)) {
            const auto smp = eval_sdf<3>(s, y);
            const Mat<3> fd = fd_hessian<3>(s, y);
            CHECK((fd - smp.hess).norm() < 1e-7);
        }
    }
}

TEST_CASE("curvature eigenvalues respect the reach bound") {
    const ShapeSpec s = torus_2_05();
    const double r0 = 0.5;
    for (const auto& y : tube_points<3>(s, 0.1, 200)) {
        const Vec<3> x = project_to_surface<3>(s, y);
        const auto smp = eval_sdf<3>(s, x);
        Eigen::SelfAdjointEigenSolver<Mat<3>> eig(smp.hess);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(eig.eigenvalues()[i]) <= 1.0 / r0 + 1e-6);
    }
}

TEST_CASE("medial axis detection") {
    const auto at_center = eval_sdf<3>(unit_ball(), Vec<3>(0, 0, 0));
    CHECK(at_center.medial_axis_proximity);
    CHECK_FALSE(at_center.footpoint_valid);
    CHECK_THROWS_AS(project_to_surface<3>(unit_ball(), Vec<3>(0, 0, 0)),
                    NonConvergedProjection);

    ShapeSpec two{ShapeKind::union_of_balls, {-2, 0, 0, 1, 2, 0, 0, 1}, {0, 0, 0}, 3};
    two.validate();
    const auto mid = eval_sdf<3>(two, Vec<3>(0, 0.3, 0));
    CHECK(mid.medial_axis_proximity);
    const auto off = eval_sdf<3>(two, Vec<3>(1.2, 0, 0));
    CHECK_FALSE(off.medial_axis_proximity);
    CHECK(off.b == Approx(-0.2).margin(1e-12));

    SdfOptions probe;
    probe.check_medial = true;
    probe.want_hess = false;
    const auto deep = eval_sdf<3>(ellipsoid(2, 1, 1), Vec<3>(0, 0, 0), probe);
    CHECK(deep.medial_axis_proximity);
}

TEST_CASE("capsule closed form") {
    ShapeSpec cap{ShapeKind::capsule, {0.5, 1.0, 0.0, 0.0}, {0, 0, 0}, 3};
    cap.validate();
    const auto side = eval_sdf<3>(cap, Vec<3>(0.2, 1.0, 0.0));
    CHECK(side.b == Approx(0.5).margin(1e-14));
    CHECK((side.grad - Vec<3>(0, 1, 0)).norm() < 1e-14);
    // cylindrical segment: one curved direction with curvature 1/rho
    Eigen::SelfAdjointEigenSolver<Mat<3>> eig(side.hess);
    CHECK(eig.eigenvalues()[2] == Approx(1.0).margin(1e-12));
    const auto tip = eval_sdf<3>(cap, Vec<3>(2.0, 0.0, 0.0));
    CHECK(tip.b == Approx(0.5).margin(1e-14));
    const Mat<3> fd = fd_hessian<3>(cap, Vec<3>(0.2, 0.9, 0.1));
    CHECK((fd - eval_sdf<3>(cap, Vec<3>(0.2, 0.9, 0.1)).hess).norm() < 1e-7);
}

TEST_CASE("harmonic sphere boundary consistency") {
    const ShapeSpec s = harmonic_bump();
    s.validate();
    for (const auto& y : tube_points<3>(s, 0.1, 30)) {
        const Vec<3> p = project_to_surface<3>(s, y);
        // on-surface: radial graph equation holds at the footpoint
        const double rho = p.norm();
        CHECK(rho == Approx(detail::harmonic_radius(s, Vec<3>(p / rho))).margin(1e-8));
    }
    ShapeSpec steep = s;
    steep.params[1 + 3 + 2] = 3.0;
    CHECK_THROWS_AS(steep.validate(), InvalidArgument);
}

TEST_CASE("shape JSON round trip and validation") {
    const ShapeSpec s = torus_2_05();
    const auto back = ShapeSpec::from_json(s.to_json());
    CHECK(back.kind == s.kind);
    CHECK(back.params == s.params);
    CHECK_THROWS_AS(ShapeSpec::from_json(nlohmann::json{{"kind", "ball"}}), ParseError);
    CHECK_THROWS_AS(ShapeSpec::from_json(nlohmann::json{
                        {"kind", "torus"}, {"params", {0.5, 2.0}}, {"center", {0, 0, 0}},
                        {"dim", 3}}),
                    Error);
    ShapeSpec overlapping{ShapeKind::union_of_balls, {-1, 0, 0, 1, 1, 0, 0, 1.5}, {0, 0, 0}, 3};
    CHECK_THROWS_AS(overlapping.validate(), InvalidArgument);
}

TEST_CASE("2-d shapes evaluate") {
    ShapeSpec disc{ShapeKind::ball, {1.0}, {0, 0}, 2};
    const auto smp = eval_sdf<2>(disc, Vec<2>(0, 2));
    CHECK(smp.b == Approx(1.0).margin(1e-14));
    CHECK((smp.grad - Vec<2>(0, 1)).norm() < 1e-14);
    ShapeSpec ell{ShapeKind::ellipsoid, {1.5, 1.0}, {0, 0}, 2};
    CHECK((project_to_surface<2>(ell, Vec<2>(2.5, 0)) - Vec<2>(1.5, 0)).norm() < 1e-9);
}
