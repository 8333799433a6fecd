#pragma once

// Synthetic weather data.  Clean images are procedural (gradients,
// rectangles, sinusoids); degradations draw additive rain streaks or
// alpha-composited snow discs on top.  Everything is a pure function of the
// seed, so a dataset can be regenerated exactly from its manifest line.

#include <cmath>
#include <string>
#include <vector>

#include "wsr/tensor.hpp"

namespace wsr::synth {

struct DegradeSpec {
    std::string kind = "rain";      // rain | snow
    double density = 0.3;           // [0,1]; 0 leaves the image untouched
    double angle = 0.0;             // rain streak angle, degrees from vertical
    double particle_radius = 2.0;   // snow disc radius in pixels
    double intensity = 0.8;         // [0,1] strength of the overlay
    std::uint64_t seed = 0;

    void validate() const {
        if (kind != "rain" && kind != "snow")
            throw ConfigError("degrade spec: kind must be rain or snow, got \"" + kind + "\"");
        if (density < 0 || density > 1) throw ConfigError("degrade spec: density must be in [0,1]");
        if (intensity < 0 || intensity > 1) throw ConfigError("degrade spec: intensity must be in [0,1]");
        if (particle_radius < 1) throw ConfigError("degrade spec: particle_radius must be >= 1");
    }
};

// Procedural clean image in [0,1], shape [1,3,h,w].
template <typename T>
Tensor<T> generate_clean(std::uint64_t seed, std::int64_t h, std::int64_t w) {
    if (h < 1 || w < 1) throw DimensionError("generate_clean: extents must be positive");
    Pcg32 rng(seed, 21);
    Tensor<T> img(Shape{1, 3, h, w});
    for (std::int64_t c = 0; c < 3; ++c) {
        const double base = rng.uniform(0.25, 0.65);
        const double gi = rng.uniform(-0.3, 0.3), gj = rng.uniform(-0.3, 0.3);
        T* p = img.data() + c * h * w;
        for (std::int64_t i = 0; i < h; ++i)
            for (std::int64_t j = 0; j < w; ++j)
                p[i * w + j] = T(base + gi * (double(i) / double(h)) + gj * (double(j) / double(w)));
    }
    for (int r = 0; r < 3; ++r) {
        const std::int64_t i0 = std::int64_t(rng.next_below(std::uint64_t(h)));
        const std::int64_t j0 = std::int64_t(rng.next_below(std::uint64_t(w)));
        const std::int64_t ih = 1 + std::int64_t(rng.next_below(std::uint64_t((h + 2) / 3)));
        const std::int64_t jw = 1 + std::int64_t(rng.next_below(std::uint64_t((w + 2) / 3)));
        const double alpha = rng.uniform(0.4, 0.9);
        double color[3] = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
        for (std::int64_t c = 0; c < 3; ++c) {
            T* p = img.data() + c * h * w;
            for (std::int64_t i = i0; i < std::min(h, i0 + ih); ++i)
                for (std::int64_t j = j0; j < std::min(w, j0 + jw); ++j)
                    p[i * w + j] = T((1 - alpha) * double(p[i * w + j]) + alpha * color[c]);
        }
    }
    for (int s = 0; s < 2; ++s) {
        const double fi = rng.uniform(0.5, 3.0), fj = rng.uniform(0.5, 3.0);
        const double phase = rng.uniform(0.0, 6.283185307179586);
        const double amp = rng.uniform(0.03, 0.1);
        for (std::int64_t c = 0; c < 3; ++c) {
            T* p = img.data() + c * h * w;
            for (std::int64_t i = 0; i < h; ++i)
                for (std::int64_t j = 0; j < w; ++j)
                    p[i * w + j] += T(amp * std::sin(6.283185307179586 *
                                                         (fi * double(i) / double(h) +
                                                          fj * double(j) / double(w)) +
                                                     phase));
        }
    }
    for (std::int64_t i = 0; i < img.size(); ++i)
        img[i] = std::min(T(1), std::max(T(0), img[i]));
    return img;
}

namespace detail {

template <typename T>
void splat_bilinear(std::vector<T>& layer, std::int64_t h, std::int64_t w, double y, double x,
                    double v) {
    const std::int64_t i0 = std::int64_t(std::floor(y)), j0 = std::int64_t(std::floor(x));
    const double fy = y - double(i0), fx = x - double(j0);
    const double wts[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
    const std::int64_t ii[4] = {i0, i0, i0 + 1, i0 + 1};
    const std::int64_t jj[4] = {j0, j0 + 1, j0, j0 + 1};
    for (int k = 0; k < 4; ++k)
        if (ii[k] >= 0 && ii[k] < h && jj[k] >= 0 && jj[k] < w)
            layer[ii[k] * w + jj[k]] += T(v * wts[k]);
}

template <typename T>
double sample_bilinear(const std::vector<T>& layer, std::int64_t h, std::int64_t w, double y,
                       double x) {
    const std::int64_t i0 = std::int64_t(std::floor(y)), j0 = std::int64_t(std::floor(x));
    const double fy = y - double(i0), fx = x - double(j0);
    auto at = [&](std::int64_t i, std::int64_t j) -> double {
        if (i < 0 || i >= h || j < 0 || j >= w) return 0;
        return double(layer[i * w + j]);
    };
    return (1 - fy) * ((1 - fx) * at(i0, j0) + fx * at(i0, j0 + 1)) +
           fy * ((1 - fx) * at(i0 + 1, j0) + fx * at(i0 + 1, j0 + 1));
}

}  // namespace detail

// Applies the weather overlay.  Output is clamped to [0,1].  Increasing
// density strictly extends the overlay drawn at lower densities under the
// same seed, so image quality degrades monotonically with density.
template <typename T>
Tensor<T> degrade(const Tensor<T>& clean, const DegradeSpec& spec) {
    spec.validate();
    if (clean.rank() != 4 || clean.dim(1) != 3)
        throw DimensionError("degrade: expected [N,3,H,W], got " + shape_str(clean.shape()));
    Tensor<T> out = clean;
    if (spec.density == 0) return out;
    const std::int64_t N = clean.dim(0), h = clean.dim(2), w = clean.dim(3);
    const double deg = 3.141592653589793 / 180.0;

    for (std::int64_t n = 0; n < N; ++n) {
        Pcg32 rng(mix_seed(spec.seed, std::uint64_t(n)), 31);
        T* img = out.data() + n * 3 * h * w;
        if (spec.kind == "rain") {
            std::vector<T> layer(h * w, T(0));
            const std::int64_t count =
                std::int64_t(std::llround(spec.density * double(h) * double(w) / 48.0));
            for (std::int64_t s = 0; s < count; ++s) {
                const double cy = rng.uniform(0, double(h)), cx = rng.uniform(0, double(w));
                const double len = rng.uniform(double(h) / 4.0, double(h) / 2.0);
                const double th = (spec.angle + rng.uniform(-5.0, 5.0)) * deg;
                const double dy = std::cos(th), dx = std::sin(th);
                const double bright = spec.intensity * rng.uniform(0.35, 0.7);
                const int steps = std::max(2, int(std::ceil(len * 2)));
                for (int t = 0; t < steps; ++t) {
                    const double u = (double(t) / double(steps - 1) - 0.5) * len;
                    detail::splat_bilinear(layer, h, w, cy + u * dy, cx + u * dx, bright / 2.0);
                }
            }
            // 3-tap box blur along the nominal streak direction.
            const double by = std::cos(spec.angle * deg), bx = std::sin(spec.angle * deg);
            std::vector<T> blurred(h * w);
            for (std::int64_t i = 0; i < h; ++i)
                for (std::int64_t j = 0; j < w; ++j)
                    blurred[i * w + j] =
                        T((detail::sample_bilinear(layer, h, w, i - by, j - bx) +
                           double(layer[i * w + j]) +
                           detail::sample_bilinear(layer, h, w, i + by, j + bx)) /
                          3.0);
            for (std::int64_t c = 0; c < 3; ++c)
                for (std::int64_t px = 0; px < h * w; ++px) img[c * h * w + px] += blurred[px];
        } else {  // snow
            const double r = spec.particle_radius;
            const std::int64_t count = std::int64_t(
                std::llround(spec.density * double(h) * double(w) / (16.0 * r * r)));
            for (std::int64_t s = 0; s < count; ++s) {
                const double cy = rng.uniform(0, double(h)), cx = rng.uniform(0, double(w));
                const double rad = r * rng.uniform(0.6, 1.4);
                const double alpha = spec.intensity * rng.uniform(0.4, 0.9);
                const std::int64_t i0 = std::max<std::int64_t>(0, std::int64_t(cy - rad - 1));
                const std::int64_t i1 = std::min(h, std::int64_t(cy + rad + 2));
                const std::int64_t j0 = std::max<std::int64_t>(0, std::int64_t(cx - rad - 1));
                const std::int64_t j1 = std::min(w, std::int64_t(cx + rad + 2));
                for (std::int64_t i = i0; i < i1; ++i)
                    for (std::int64_t j = j0; j < j1; ++j) {
                        const double d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
                        const double cov = alpha * std::max(0.0, 1.0 - d2 / (rad * rad));
                        if (cov <= 0) continue;
                        for (std::int64_t c = 0; c < 3; ++c) {
                            T& px = img[c * h * w + i * w + j];
                            px = T((1 - cov) * double(px) + cov * 0.95);
                        }
                    }
            }
        }
    }
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = std::min(T(1), std::max(T(0), out[i]));
    return out;
}

// Writes count clean/degraded PNG pairs plus manifest.txt into dir.
// Returns the manifest path.  Pair i uses seeds derived from spec.seed and i.
std::string make_dataset(const std::string& dir, std::int64_t count, std::int64_t h, std::int64_t w,
                         const DegradeSpec& spec);

// Loads the pairs listed in a manifest back into memory, in file order.
struct DatasetPair {
    std::int64_t index;
    std::string clean_path, degraded_path;
    Tensor<float> clean, degraded;
};
std::vector<DatasetPair> load_dataset(const std::string& manifest_path);

}  // namespace wsr::synth
