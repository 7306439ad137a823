#include <catch2/catch_amalgamated.hpp>

#include "tubecalc/domain_pde.hpp"

using namespace tubecalc;
using Catch::Approx;

namespace {

ShapeSpec unit_ball() { return {ShapeKind::ball, {1.0}, {0, 0, 0}, 3}; }

double one(const Vec<3>&) { return 1.0; }
double zero(const Vec<3>&) { return 0.0; }

/// max-node error against a reference solution
double max_error(const DomainField<3>& f, const std::function<double(const Vec<3>&)>& ue) {
    double e = 0.0;
    for (std::size_t i = 0; i < f.interior.size(); ++i) {
        const Vec<3> x = f.grid.point(f.interior[i]);
        e = std::max(e, std::abs(f.values[i] - ue(x)));
    }
    return e;
}

}  // namespace

TEST_CASE("radial model problem in the unit ball") {
    // laplacian u = 1, u = 0 on the boundary: u = (|x|^2 - 1)/6
    const auto f = solve_poisson_dirichlet<3>(unit_ball(), one, zero, 0.05);
    CHECK(max_error(f, [](const Vec<3>& x) { return (x.squaredNorm() - 1.0) / 6.0; }) < 1e-6);
    const std::int32_t center = f.flat_to_interior[static_cast<std::size_t>(
        f.grid.flatten({static_cast<std::int64_t>(std::round((0.0 - f.grid.origin[0]) / 0.05)),
                        static_cast<std::int64_t>(std::round((0.0 - f.grid.origin[1]) / 0.05)),
                        static_cast<std::int64_t>(std::round((0.0 - f.grid.origin[2]) / 0.05))}))];
    REQUIRE(center >= 0);
    CHECK(f.values[static_cast<std::size_t>(center)] == Approx(-1.0 / 6.0).margin(1e-6));
}

TEST_CASE("constants and linear functions are reproduced exactly") {
    const auto fc = solve_poisson_dirichlet<3>(unit_ball(), zero,
                                               [](const Vec<3>&) { return 3.5; }, 0.08);
    CHECK(max_error(fc, [](const Vec<3>&) { return 3.5; }) < 1e-7);

    const auto fz = solve_poisson_dirichlet<3>(unit_ball(), zero,
                                               [](const Vec<3>& x) { return x[2]; }, 0.08);
    CHECK(max_error(fz, [](const Vec<3>& x) { return x[2]; }) < 1e-7);
}

TEST_CASE("discrete maximum principle") {
    const auto f = solve_poisson_dirichlet<3>(unit_ball(), one, zero, 0.07);
    for (double v : f.values) CHECK(v <= 1e-9);
}

TEST_CASE("second-order convergence on a manufactured solution") {
    // u* = sin(x) sin(y) sin(z), laplacian u* = -3 u*; genuinely curved so
    // the scheme's truncation is visible (the radial model is solved exactly)
    auto ue = [](const Vec<3>& x) { return std::sin(x[0]) * std::sin(x[1]) * std::sin(x[2]); };
    auto hs = [&](const Vec<3>& x) { return -3.0 * ue(x); };
    double errs[3];
    int k = 0;
    for (double sp : {0.16, 0.08, 0.04}) {
        const auto f = solve_poisson_dirichlet<3>(unit_ball(), hs, ue, sp);
        errs[k++] = max_error(f, ue);
    }
    const double order1 = std::log2(errs[0] / errs[1]);
    const double order2 = std::log2(errs[1] / errs[2]);
    CHECK(order1 >= 1.8);
    CHECK(order2 >= 1.8);
}

TEST_CASE("boundary traces of the radial solution") {
    const auto f = solve_poisson_dirichlet<3>(unit_ball(), one, zero, 0.04);
    const auto quad = build_tube<3>(unit_ball(), 0.1, 0.025);
    const auto tr = boundary_trace<3>(f, quad);
    // du/dn = r/3 at r = 1
    for (std::size_t i = 0; i < quad.nodes.size(); i += 53) {
        CHECK(tr.u[i] == 0.0);
        CHECK(tr.grad[i].dot(quad.nodes[i].nu) == Approx(1.0 / 3.0).margin(0.01));
    }
}

TEST_CASE("traces of constant and linear fields") {
    const auto quad = build_tube<3>(unit_ball(), 0.1, 0.025);
    const auto fc = solve_poisson_dirichlet<3>(unit_ball(), zero,
                                               [](const Vec<3>&) { return 2.0; }, 0.05);
    const auto trc = boundary_trace<3>(fc, quad);
    for (std::size_t i = 0; i < quad.nodes.size(); i += 101)
        CHECK(trc.grad[i].norm() < 5e-3);

    const auto fz = solve_poisson_dirichlet<3>(unit_ball(), zero,
                                               [](const Vec<3>& x) { return x[2]; }, 0.05);
    const auto trz = boundary_trace<3>(fz, quad);
    for (std::size_t i = 0; i < quad.nodes.size(); i += 101)
        CHECK((trz.grad[i] - Vec<3>(0, 0, 1)).norm() < 5e-3);
}

TEST_CASE("trace estimate scales linearly in the tube norm") {
    // For u = z on the unit-ball tube the (1/2h)-normalized L2 norm of
    // u - u o p is proportional to h: halving h halves it within 20%.
    auto norm_at = [&](double h) {
        const auto quad = build_tube<3>(unit_ball(), h, h / 5.0);
        std::vector<double> acc(quad.nodes.size());
        for (std::size_t i = 0; i < quad.nodes.size(); ++i) {
            const auto& nd = quad.nodes[i];
            const double diff = nd.y[2] - nd.x[2];
            acc[i] = diff * diff * nd.cell_volume;
        }
        return std::sqrt(pairwise_sum(acc) / (2.0 * h));
    };
    const double nh = norm_at(0.2);
    const double nh2 = norm_at(0.1);
    CHECK(nh / nh2 == Approx(2.0).epsilon(0.2));
}

TEST_CASE("normal flux functional") {
    // j3 = <grad u, nu>^2 with du/dn = 1/3: integral is 4pi/9
    const double v = eval_F3<3>(
        unit_ball(),
        [](const Vec<3>&, const Vec<3>& nu, double, const Vec<3>& g) {
            const double dn = g.dot(nu);
            return dn * dn;
        },
        one, zero, 0.1, 0.025, 0.04);
    CHECK(v == Approx(4.0 * M_PI / 9.0).epsilon(0.05));

    const double u2 = eval_F3<3>(
        unit_ball(),
        [](const Vec<3>&, const Vec<3>&, double u, const Vec<3>&) { return u * u; }, one,
        zero, 0.1, 0.025, 0.05);
    CHECK(u2 == Approx(0.0).margin(1e-12));

    const double area = eval_F3<3>(
        unit_ball(), [](const Vec<3>&, const Vec<3>&, double, const Vec<3>&) { return 1.0; },
        one, zero, 0.1, 0.025, 0.05);
    CHECK(area == Approx(4.0 * M_PI).epsilon(0.02));
}

TEST_CASE("solver rejects bad input") {
    CHECK_THROWS_AS(solve_poisson_dirichlet<3>(unit_ball(), one, zero, 0.0),
                    SpacingTooCoarse);
    PoissonParams tight;
    tight.max_nodes = 100;
    CHECK_THROWS_AS(solve_poisson_dirichlet<3>(unit_ball(), one, zero, 0.05, tight),
                    GridTooLarge);
    PoissonParams few;
    few.max_iters = 3;
    CHECK_THROWS_AS(solve_poisson_dirichlet<3>(unit_ball(), one, zero, 0.08, few),
                    NoConvergence);
}
