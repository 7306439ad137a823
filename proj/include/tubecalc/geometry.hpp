#pragma once

#include <Eigen/Dense>

#include "tubecalc/errors.hpp"

namespace tubecalc {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

template <int D>
using Mat = Eigen::Matrix<double, D, D>;

/// Axis-aligned container box for all admissible shapes.
template <int D>
struct AmbientBox {
    Vec<D> lo;
    Vec<D> hi;

    void validate() const {
        for (int d = 0; d < D; ++d)
            if (!(lo[d] < hi[d])) throw InvalidArgument("ambient box requires lo < hi");
    }

    bool contains(const Vec<D>& x) const {
        for (int d = 0; d < D; ++d)
            if (x[d] < lo[d] || x[d] > hi[d]) return false;
        return true;
    }

    Vec<D> widths() const { return hi - lo; }

    double volume() const { return widths().prod(); }

    double diameter() const { return widths().norm(); }

    AmbientBox inflated(double margin) const {
        AmbientBox b{lo, hi};
        b.lo.array() -= margin;
        b.hi.array() += margin;
        return b;
    }

    Vec<D> lerp(const double* unit) const {
        Vec<D> p;
        for (int d = 0; d < D; ++d) p[d] = lo[d] + unit[d] * (hi[d] - lo[d]);
        return p;
    }
};

/// Orthonormal basis of the hyperplane orthogonal to unit vector n.
/// Deterministic choice, continuous away from the branch axis.
template <int D>
inline std::array<Vec<D>, D - 1> tangent_frame(const Vec<D>& n);

template <>
inline std::array<Vec<2>, 1> tangent_frame<2>(const Vec<2>& n) {
    return {Vec<2>(-n[1], n[0])};
}

template <>
inline std::array<Vec<3>, 2> tangent_frame<3>(const Vec<3>& n) {
    Vec<3> a = std::abs(n[2]) < 0.9 ? Vec<3>(0, 0, 1) : Vec<3>(1, 0, 0);
    Vec<3> t1 = n.cross(a).normalized();
    Vec<3> t2 = n.cross(t1);
    return {t1, t2};
}

}  // namespace tubecalc
