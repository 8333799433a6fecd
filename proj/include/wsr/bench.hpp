#pragma once

// Wall-clock micro-benchmarks for the linear scan against the quadratic
// attention reference, plus a least-squares log-log slope fit that turns
// timings into an empirical growth exponent.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

#include "wsr/kernels.hpp"

namespace wsr::bench {

inline double seconds_of(const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw DimensionError("median of empty sample");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// One untimed warmup, then `repeats` timed runs; reports the median.
inline double median_time(const std::function<void()>& fn, int repeats) {
    if (repeats < 1) throw ConfigError("median_time: repeats must be >= 1");
    fn();
    std::vector<double> t(repeats);
    for (int i = 0; i < repeats; ++i) t[i] = seconds_of(fn);
    return median(std::move(t));
}

// Least-squares slope of log(time) against log(len).
inline double loglog_slope(const std::vector<std::int64_t>& lens, const std::vector<double>& times) {
    if (lens.size() != times.size() || lens.size() < 2)
        throw DimensionError("loglog_slope: need at least two matched points");
    const double n = double(lens.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lens.size(); ++i) {
        const double x = std::log(double(lens[i]));
        const double y = std::log(std::max(times[i], 1e-12));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Selective scan forward at [1, D, L] with S states, random inputs.
inline double scan_median_seconds(std::int64_t L, std::int64_t D, std::int64_t S, int repeats,
                                  std::uint64_t seed = 1) {
    Pcg32 rng(seed, 51);
    Tensor<float> x = uniform_tensor<float>(Shape{1, D, L}, rng, -1, 1);
    Tensor<float> delta = uniform_tensor<float>(Shape{1, D, L}, rng, 0.01, 0.1);
    Tensor<float> A = uniform_tensor<float>(Shape{D, S}, rng, -2, -0.5);
    Tensor<float> B = uniform_tensor<float>(Shape{1, S, L}, rng, -1, 1);
    Tensor<float> C = uniform_tensor<float>(Shape{1, S, L}, rng, -1, 1);
    Tensor<float> Dskip = uniform_tensor<float>(Shape{D}, rng, 0.5, 1.5);
    Tensor<float> y(Shape{1, D, L});
    volatile float sink = 0;
    const double t = median_time(
        [&] {
            kern::scan<float>(x, A, B, C, delta, Dskip, y);
            sink = sink + y[0];
        },
        repeats);
    return t;
}

// Reference dense attention over an L-length sequence of Dm-dim tokens.
inline double attention_median_seconds(std::int64_t L, std::int64_t Dm, int repeats,
                                       std::uint64_t seed = 2) {
    Pcg32 rng(seed, 52);
    Tensor<float> x = uniform_tensor<float>(Shape{Dm, L}, rng, -1, 1);
    Tensor<float> wq = uniform_tensor<float>(Shape{Dm, Dm}, rng, -0.3, 0.3);
    Tensor<float> wk = uniform_tensor<float>(Shape{Dm, Dm}, rng, -0.3, 0.3);
    Tensor<float> wv = uniform_tensor<float>(Shape{Dm, Dm}, rng, -0.3, 0.3);
    volatile float sink = 0;
    const double t = median_time(
        [&] {
            Tensor<float> y = kern::attention<float>(x, wq, wk, wv);
            sink = sink + y[0];
        },
        repeats);
    return t;
}

}  // namespace wsr::bench
