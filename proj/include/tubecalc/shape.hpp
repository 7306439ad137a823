#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "tubecalc/errors.hpp"
#include "tubecalc/geometry.hpp"

namespace tubecalc {

enum class ShapeKind { ball, ellipsoid, torus, capsule, union_of_balls, harmonic_sphere };

inline const char* to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::ball: return "ball";
        case ShapeKind::ellipsoid: return "ellipsoid";
        case ShapeKind::torus: return "torus";
        case ShapeKind::capsule: return "capsule";
        case ShapeKind::union_of_balls: return "union_of_balls";
        case ShapeKind::harmonic_sphere: return "harmonic_sphere";
    }
    return "?";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "ball") return ShapeKind::ball;
    if (s == "ellipsoid") return ShapeKind::ellipsoid;
    if (s == "torus") return ShapeKind::torus;
    if (s == "capsule") return ShapeKind::capsule;
    if (s == "union_of_balls") return ShapeKind::union_of_balls;
    if (s == "harmonic_sphere") return ShapeKind::harmonic_sphere;
    throw ParseError("unknown shape kind '" + s + "'");
}

namespace harmonics {

/// Real spherical harmonic of degree l, order m (no Condon-Shortley phase);
/// unit vector w on S^2. Used for radially perturbed spheres up to degree 4.
inline double real_sph(int l, int m, const Vec<3>& w) {
    const double ct = std::clamp(w[2], -1.0, 1.0);
    const double phi = std::atan2(w[1], w[0]);
    const int am = std::abs(m);
    double nf = 1.0;
    for (int k = l - am + 1; k <= l + am; ++k) nf *= k;  // (l+|m|)! / (l-|m|)!
    const double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * M_PI) / nf);
    const double plm = std::assoc_legendre(static_cast<unsigned>(l),
                                           static_cast<unsigned>(am), ct);
    if (m == 0) return norm * plm;
    const double ang = m > 0 ? std::cos(am * phi) : std::sin(am * phi);
    return std::sqrt(2.0) * norm * plm * ang;
}

constexpr int max_degree = 4;
constexpr int coeff_count_3d = 24;  // (l,m), l = 1..4, m = -l..l
constexpr int coeff_count_2d = 8;   // cos k, sin k, k = 1..4

}  // namespace harmonics

/// Declarative description of an admissible closed set. Parameter layout per
/// kind (all lengths in ambient units, positions relative to `center`):
///   ball            [r]
///   ellipsoid       [a, b, c] with a >= b >= c > 0 (d = 3), [a, b] (d = 2)
///   torus           [R, r], axis e_z, d = 3 only
///   capsule         [r, hx, hy, (hz)]; endpoints center +- h
///   union_of_balls  [x, y, (z), r] repeated; balls must be pairwise disjoint
///   harmonic_sphere [r0, coeffs...]; radial factor 1 + sum c_i Y_i with
///                   degree <= 4 harmonics (d = 3) or Fourier modes (d = 2)
struct ShapeSpec {
    ShapeKind kind = ShapeKind::ball;
    std::vector<double> params;
    std::vector<double> center;
    int dim = 3;

    template <int D>
    Vec<D> center_vec() const {
        Vec<D> c = Vec<D>::Zero();
        for (int d = 0; d < std::min<int>(D, static_cast<int>(center.size())); ++d)
            c[d] = center[d];
        return c;
    }

    int balls() const { return static_cast<int>(params.size()) / (dim + 1); }

    /// Conservative diameter of an enclosing ball; sets the scale for all
    /// relative tolerances (tol_surface, hessian steps, reach margins).
    double diameter() const {
        switch (kind) {
            case ShapeKind::ball: return 2.0 * params.at(0);
            case ShapeKind::ellipsoid: return 2.0 * params.at(0);
            case ShapeKind::torus: return 2.0 * (params.at(0) + params.at(1));
            case ShapeKind::capsule: {
                double h2 = 0.0;
                for (int d = 0; d < dim; ++d) h2 += params.at(1 + d) * params.at(1 + d);
                return 2.0 * (std::sqrt(h2) + params.at(0));
            }
            case ShapeKind::union_of_balls: {
                double reach_out = 0.0;
                const int n = balls();
                for (int i = 0; i < n; ++i) {
                    double c2 = 0.0;
                    for (int d = 0; d < dim; ++d) {
                        const double v = params.at(i * (dim + 1) + d);
                        c2 += v * v;
                    }
                    reach_out = std::max(reach_out, std::sqrt(c2) + params.at(i * (dim + 1) + dim));
                }
                return 2.0 * reach_out;
            }
            case ShapeKind::harmonic_sphere: {
                double amp = 0.0;
                for (std::size_t i = 1; i < params.size(); ++i) amp += std::abs(params[i]);
                return 2.0 * params.at(0) * (1.0 + 1.5 * amp);
            }
        }
        return 0.0;
    }

    template <int D>
    AmbientBox<D> bounding_box(double inflate = 0.0) const {
        const double r = 0.5 * diameter() + inflate;
        AmbientBox<D> box;
        box.lo = center_vec<D>().array() - r;
        box.hi = center_vec<D>().array() + r;
        return box;
    }

    /// Point in the interior, used to seed component counts.
    template <int D>
    Vec<D> interior_point() const {
        Vec<D> c = center_vec<D>();
        if (kind == ShapeKind::torus) c[0] += params.at(0);
        if (kind == ShapeKind::union_of_balls)
            for (int d = 0; d < dim; ++d) c[d] += params.at(d);
        return c;
    }

    /// Similar copy scaled by lambda about the center.
    ShapeSpec scaled(double lambda) const {
        ShapeSpec s = *this;
        switch (kind) {
            case ShapeKind::ball:
            case ShapeKind::ellipsoid:
            case ShapeKind::torus:
            case ShapeKind::capsule:
            case ShapeKind::union_of_balls:
                for (double& p : s.params) p *= lambda;
                break;
            case ShapeKind::harmonic_sphere:
                s.params.at(0) *= lambda;  // modal coefficients are dimensionless
                break;
        }
        return s;
    }

    void validate() const;

    static ShapeSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

namespace detail {

/// Radial factor of a harmonic sphere at unit direction w (3-d overload).
inline double harmonic_radius(const ShapeSpec& s, const Vec<3>& w) {
    double rho = 1.0;
    int idx = 1;
    for (int l = 1; l <= harmonics::max_degree && idx < static_cast<int>(s.params.size()); ++l)
        for (int m = -l; m <= l && idx < static_cast<int>(s.params.size()); ++m, ++idx)
            if (s.params[idx] != 0.0) rho += s.params[idx] * harmonics::real_sph(l, m, w);
    return s.params[0] * rho;
}

/// 2-d analogue: truncated Fourier series in the polar angle.
inline double harmonic_radius(const ShapeSpec& s, const Vec<2>& w) {
    const double th = std::atan2(w[1], w[0]);
    double rho = 1.0;
    int idx = 1;
    for (int k = 1; k <= harmonics::max_degree; ++k) {
        if (idx < static_cast<int>(s.params.size())) rho += s.params[idx++] * std::cos(k * th);
        if (idx < static_cast<int>(s.params.size())) rho += s.params[idx++] * std::sin(k * th);
    }
    return s.params[0] * rho;
}

template <int D>
inline void check_harmonic_graph(const ShapeSpec& s) {
    // The radial graph is a hypersurface iff rho > 0 and the angular slope
    // stays below 1; checked on a dense angular sample.
    const int n = D == 2 ? 2048 : 96;
    const double dt = 1e-5;
    double max_slope = 0.0, min_rho = std::numeric_limits<double>::max();
    auto probe = [&](const Vec<D>& w) {
        const double rho = harmonic_radius(s, w);
        min_rho = std::min(min_rho, rho);
        for (const auto& t : tangent_frame<D>(w)) {
            const Vec<D> wp = (w + dt * t).normalized();
            const Vec<D> wm = (w - dt * t).normalized();
            const double drho = (harmonic_radius(s, wp) - harmonic_radius(s, wm)) / (2.0 * dt);
            max_slope = std::max(max_slope, std::abs(drho) / rho);
        }
    };
    if constexpr (D == 2) {
        for (int i = 0; i < n; ++i) {
            const double th = 2.0 * M_PI * i / n;
            probe(Vec<2>(std::cos(th), std::sin(th)));
        }
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 2 * n; ++j) {
                const double th = M_PI * (i + 0.5) / n, ph = M_PI * j / n;
                probe(Vec<3>(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph),
                             std::cos(th)));
            }
    }
    if (min_rho <= 0.0)
        throw InvalidArgument("harmonic_sphere radial factor must stay positive");
    if (max_slope >= 1.0)
        throw InvalidArgument("harmonic_sphere perturbation too steep (|slope| must be < 1)");
}

}  // namespace detail

inline void ShapeSpec::validate() const {
    if (dim != 2 && dim != 3) throw InvalidArgument("dim must be 2 or 3");
    if (static_cast<int>(center.size()) != dim)
        throw InvalidArgument("center must have `dim` entries");
    auto positive = [&](double v, const char* what) {
        if (!(v > 0.0)) throw InvalidArgument(std::string(what) + " must be positive");
    };
    switch (kind) {
        case ShapeKind::ball:
            if (params.size() != 1) throw InvalidArgument("ball expects params [r]");
            positive(params[0], "ball radius");
            break;
        case ShapeKind::ellipsoid: {
            if (static_cast<int>(params.size()) != dim)
                throw InvalidArgument("ellipsoid expects one semi-axis per dimension");
            for (double a : params) positive(a, "ellipsoid semi-axis");
            for (std::size_t i = 1; i < params.size(); ++i)
                if (params[i] > params[i - 1])
                    throw InvalidArgument("ellipsoid semi-axes must be sorted a >= b >= c");
            break;
        }
        case ShapeKind::torus:
            if (dim != 3) throw InvalidArgument("torus requires dim = 3");
            if (params.size() != 2) throw InvalidArgument("torus expects params [R, r]");
            positive(params[0], "torus major radius");
            positive(params[1], "torus minor radius");
            if (params[1] >= params[0])
                throw InvalidArgument("torus requires r < R");
            break;
        case ShapeKind::capsule: {
            if (static_cast<int>(params.size()) != dim + 1)
                throw InvalidArgument("capsule expects params [r, half-axis...]");
            positive(params[0], "capsule radius");
            break;
        }
        case ShapeKind::union_of_balls: {
            if (params.empty() || params.size() % (dim + 1) != 0)
                throw InvalidArgument("union_of_balls expects groups of [center..., r]");
            const int n = balls();
            for (int i = 0; i < n; ++i) positive(params[i * (dim + 1) + dim], "ball radius");
            // Overlapping or tangent balls make the boundary non-smooth and
            // break the reach precondition; only separated unions admitted.
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) {
                    double d2 = 0.0;
                    for (int d = 0; d < dim; ++d) {
                        const double v = params[i * (dim + 1) + d] - params[j * (dim + 1) + d];
                        d2 += v * v;
                    }
                    const double rr = params[i * (dim + 1) + dim] + params[j * (dim + 1) + dim];
                    if (std::sqrt(d2) <= rr)
                        throw InvalidArgument("union_of_balls requires pairwise disjoint balls");
                }
            break;
        }
        case ShapeKind::harmonic_sphere: {
            const int want = dim == 2 ? harmonics::coeff_count_2d : harmonics::coeff_count_3d;
            if (params.empty() || static_cast<int>(params.size()) > want + 1)
                throw InvalidArgument("harmonic_sphere expects [r0, <= " +
                                      std::to_string(want) + " coefficients]");
            positive(params[0], "harmonic_sphere base radius");
            if (dim == 2)
                detail::check_harmonic_graph<2>(*this);
            else
                detail::check_harmonic_graph<3>(*this);
            break;
        }
    }
}

inline ShapeSpec ShapeSpec::from_json(const nlohmann::json& j) {
    try {
        ShapeSpec s;
        s.kind = shape_kind_from_string(j.at("kind").get<std::string>());
        s.params = j.at("params").get<std::vector<double>>();
        s.center = j.at("center").get<std::vector<double>>();
        s.dim = j.at("dim").get<int>();
        s.validate();
        return s;
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw ParseError(std::string("bad shape description: ") + e.what());
    }
}

inline nlohmann::json ShapeSpec::to_json() const {
    return {{"kind", to_string(kind)}, {"params", params}, {"center", center}, {"dim", dim}};
}

}  // namespace tubecalc
