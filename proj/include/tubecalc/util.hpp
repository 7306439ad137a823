#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <thread>
#include <vector>

namespace tubecalc {

/// Deterministic summation with a fixed reduction tree. The result depends
/// only on the order of the input values, never on thread count.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 32) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(std::span<const double>(v.data(), v.size()));
}

inline int hardware_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

/// Static-chunk parallel loop. fn(begin, end) is called on disjoint index
/// ranges; with threads <= 1 it runs inline. Chunking is a function of n and
/// the thread count only, so per-index outputs are identical for any count.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (threads <= 0) threads = hardware_threads();
    const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    if (nt <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    const std::size_t chunk = (n + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& th : pool) th.join();
}

/// Van der Corput radical inverse, the 1-d building block of the Halton
/// sequence used for all quasi-uniform sampling.
inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base);
    double f = inv;
    double r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

/// i-th Halton point in [0,1)^dim (dim <= 3). The seed shifts the start
/// index so distinct seeds give distinct, still deterministic, sequences.
inline void halton_point(std::uint64_t i, std::uint64_t seed, int dim, double* out) {
    static constexpr std::uint64_t bases[3] = {2, 3, 5};
    const std::uint64_t k = i + 1 + seed * 7919;
    for (int d = 0; d < dim; ++d) out[d] = radical_inverse(k, bases[d]);
}

}  // namespace tubecalc
