#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tubecalc/sdf.hpp"
#include "tubecalc/util.hpp"

namespace tubecalc {

/// Uniform vertex-centered lattice covering a box: nodes at
/// origin + i * spacing, endpoints included. Each node is the center of its
/// dual cell of volume spacing^D.
template <int D>
struct GridSpec {
    Vec<D> origin;
    double spacing = 0.0;
    std::array<std::int64_t, D> dims{};

    static GridSpec cover(const AmbientBox<D>& box, double spacing) {
        if (!(spacing > 0.0)) throw GridTooLarge("grid spacing must be positive");
        box.validate();
        GridSpec g;
        g.origin = box.lo;
        g.spacing = spacing;
        for (int d = 0; d < D; ++d)
            g.dims[d] = static_cast<std::int64_t>(
                            std::ceil((box.hi[d] - box.lo[d]) / spacing - 1e-9)) +
                        1;
        return g;
    }

    std::int64_t size() const {
        std::int64_t n = 1;
        for (int d = 0; d < D; ++d) n *= dims[d];
        return n;
    }

    std::array<std::int64_t, D> unflatten(std::int64_t flat) const {
        std::array<std::int64_t, D> idx{};
        for (int d = 0; d < D; ++d) {
            idx[d] = flat % dims[d];
            flat /= dims[d];
        }
        return idx;
    }

    std::int64_t flatten(const std::array<std::int64_t, D>& idx) const {
        std::int64_t flat = 0;
        for (int d = D - 1; d >= 0; --d) flat = flat * dims[d] + idx[d];
        return flat;
    }

    bool in_bounds(const std::array<std::int64_t, D>& idx) const {
        for (int d = 0; d < D; ++d)
            if (idx[d] < 0 || idx[d] >= dims[d]) return false;
        return true;
    }

    Vec<D> point(const std::array<std::int64_t, D>& idx) const {
        Vec<D> p;
        for (int d = 0; d < D; ++d) p[d] = origin[d] + idx[d] * spacing;
        return p;
    }

    Vec<D> point(std::int64_t flat) const { return point(unflatten(flat)); }

    double cell_volume() const {
        double v = 1.0;
        for (int d = 0; d < D; ++d) v *= spacing;
        return v;
    }
};

enum class CellClass : std::uint8_t { outside = 0, inside = 1, tube = 2 };

/// Sampled distance field on a grid. Stores the distance and classification
/// per cell; full derivative samples are recomputed on demand to keep large
/// grids affordable.
template <int D>
struct SdfGrid {
    GridSpec<D> grid;
    ShapeSpec shape;
    double tube_halfwidth = 0.0;
    std::vector<double> b;
    std::vector<CellClass> cls;

    SdfSample<D> sample(std::int64_t flat, const SdfOptions& o = {}) const {
        return eval_sdf<D>(shape, grid.point(flat), o);
    }
};

struct GridOptions {
    std::int64_t max_nodes = 200'000'000;
    double tube_halfwidth = 0.0;  // 0: no tube classification
    int threads = 1;
};

/// Evaluates b on every cell center of `box` and flags cells inside /
/// outside / tube. Pure per-cell work, parallelized over cells.
template <int D>
SdfGrid<D> sample_grid(const ShapeSpec& shape, const AmbientBox<D>& box, double spacing,
                       const GridOptions& opt = {}) {
    if (!(spacing > 0.0)) throw GridTooLarge("grid spacing must be positive");
    SdfGrid<D> out;
    out.grid = GridSpec<D>::cover(box, spacing);
    out.shape = shape;
    out.tube_halfwidth = opt.tube_halfwidth;
    const std::int64_t n = out.grid.size();
    if (n > opt.max_nodes)
        throw GridTooLarge("grid of " + std::to_string(n) + " nodes exceeds budget of " +
                           std::to_string(opt.max_nodes));
    out.b.resize(static_cast<std::size_t>(n));
    out.cls.resize(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), opt.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double bi = eval_b<D>(shape, out.grid.point(static_cast<std::int64_t>(i)));
            out.b[i] = bi;
            if (opt.tube_halfwidth > 0.0 && std::abs(bi) < opt.tube_halfwidth)
                out.cls[i] = CellClass::tube;
            else
                out.cls[i] = bi < 0.0 ? CellClass::inside : CellClass::outside;
        }
    });
    return out;
}

struct VolumeOptions {
    std::int64_t max_nodes = 200'000'000;
    int threads = 1;
    int subcell = 0;  // per-axis subdivision of boundary cells (0 = off)
};

/// Lebesgue measure of the inside region by cell counting, optionally with
/// subcell refinement of cells straddling the boundary.
template <int D>
double volume(const ShapeSpec& shape, double spacing, const VolumeOptions& opt = {}) {
    if (!(spacing > 0.0)) throw GridTooLarge("volume requires positive spacing");
    const AmbientBox<D> box = shape.bounding_box<D>(2.0 * spacing);
    const GridSpec<D> grid = GridSpec<D>::cover(box, spacing);
    const std::int64_t n = grid.size();
    if (n > opt.max_nodes)
        throw GridTooLarge("volume grid of " + std::to_string(n) + " nodes exceeds budget");
    const double cellvol = grid.cell_volume();
    const double half_diag = 0.5 * spacing * std::sqrt(double(D));
    std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
    parallel_for(static_cast<std::size_t>(n), opt.threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Vec<D> y = grid.point(static_cast<std::int64_t>(i));
            const double bi = eval_b<D>(shape, y);
            if (opt.subcell > 0 && std::abs(bi) <= half_diag) {
                const int m = opt.subcell;
                std::int64_t cnt = 0, tot = 1;
                for (int d = 0; d < D; ++d) tot *= m;
                for (std::int64_t sub = 0; sub < tot; ++sub) {
                    std::int64_t rem = sub;
                    Vec<D> q = y;
                    for (int d = 0; d < D; ++d) {
                        const std::int64_t k = rem % m;
                        rem /= m;
                        q[d] += ((k + 0.5) / m - 0.5) * spacing;
                    }
                    if (eval_b<D>(shape, q) < 0.0) ++cnt;
                }
                acc[i] = cellvol * static_cast<double>(cnt) / static_cast<double>(tot);
            } else if (bi < 0.0) {
                acc[i] = cellvol;
            }
        }
    });
    return pairwise_sum(acc);
}

}  // namespace tubecalc
