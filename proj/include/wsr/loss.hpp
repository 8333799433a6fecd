#pragma once

// Training objective and image quality metrics.
//
// The perceptual term compares activations from a small frozen conv network.
// Any feature map can be plugged in through FeatureFn; the built-in stub
// draws its weights from a fixed seed so runs are reproducible without
// external files.  To use real pretrained features, adapt them to the same
// callable signature: the weights only need to be loaded as graph constants,
// layout [Cout,Cin,kh,kw] per conv, exactly like the stub below.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "wsr/graph.hpp"
#include "wsr/kernels.hpp"

namespace wsr {

template <typename T>
using FeatureFn = std::function<Var(Graph<T>&, Var)>;

// Three conv layers, inputs [N,3,H,W] with H,W divisible by 4:
//   3 -> 8, 4x4 stride 2, relu; 8 -> 16, 4x4 stride 2, relu; 16 -> 16, 3x3.
// Weights are fixed at construction and never trained.
template <typename T>
struct ConvFeatureStub {
    Tensor<T> w1, w2, w3;

    explicit ConvFeatureStub(std::uint64_t seed = 0x5eedf00d) {
        Pcg32 rng(seed, 11);
        w1 = fanin_conv(8, 3, 4, rng);
        w2 = fanin_conv(16, 8, 4, rng);
        w3 = fanin_conv(16, 16, 3, rng);
    }

    Var operator()(Graph<T>& g, Var x) const {
        Var h1 = g.relu(g.conv2d(x, g.constant(w1), Var{}, 2, 1));
        Var h2 = g.relu(g.conv2d(h1, g.constant(w2), Var{}, 2, 1));
        return g.conv2d(h2, g.constant(w3), Var{}, 1, 1);
    }

  private:
    static Tensor<T> fanin_conv(std::int64_t cout, std::int64_t cin, std::int64_t k, Pcg32& rng) {
        Tensor<T> w(Shape{cout, cin, k, k});
        const double bound = std::sqrt(1.0 / double(cin * k * k));
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = T(rng.uniform(-bound, bound));
        return w;
    }
};

// Huber-style pixel loss, mean reduced: 0.5 e^2 inside |e| < 1, |e| - 0.5 outside.
template <typename T>
Var smooth_l1_loss(Graph<T>& g, Var pred, Var target) {
    return g.smooth_l1(pred, target);
}

template <typename T>
Var perceptual_loss(Graph<T>& g, Var pred, Var target, const FeatureFn<T>& features) {
    return g.mse(features(g, pred), features(g, target));
}

template <typename T>
Var total_loss(Graph<T>& g, Var pred, Var target, const FeatureFn<T>& features, double lambda) {
    Var pix = smooth_l1_loss(g, pred, target);
    if (lambda == 0) return pix;
    return g.add(pix, g.scale(perceptual_loss(g, pred, target, features), lambda));
}

// Plain-tensor metrics.

template <typename T>
double mse_value(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionError("mse: shape mismatch");
    double acc = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double e = double(a[i]) - double(b[i]);
        acc += e * e;
    }
    return a.size() ? acc / double(a.size()) : 0.0;
}

// Identical images produce +infinity, not a float overflow.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    const double m = mse_value(a, b);
    if (m == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

namespace detail {
inline const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(11);
        double sum = 0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - 5.0;
            v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += v[i];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return w;
}
}  // namespace detail

// Mean structural similarity over all valid 11x11 windows of every plane.
// Gaussian weights, sigma 1.5, stabilizers k1 = 0.01 and k2 = 0.03 on peak.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    if (!a.same_shape(b)) throw DimensionError("ssim: shape mismatch");
    if (a.rank() != 4) throw DimensionError("ssim: expected [N,C,H,W], got " + shape_str(a.shape()));
    const std::int64_t N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    if (H < 11 || W < 11) throw DimensionError("ssim: image smaller than the 11x11 window");
    const auto& win = detail::ssim_window();
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);

    const std::int64_t Ho = H - 10, Wo = W - 10;
    double total = 0;
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const T* pa = a.data() + ((n * C + c) * H) * W;
            const T* pb = b.data() + ((n * C + c) * H) * W;
            // Separable Gaussian: filter rows first, then columns, for the
            // five window statistics at once.
            std::vector<double> ra(H * Wo), rb(H * Wo), raa(H * Wo), rbb(H * Wo), rab(H * Wo);
            for (std::int64_t i = 0; i < H; ++i)
                for (std::int64_t j = 0; j < Wo; ++j) {
                    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                    for (int k = 0; k < 11; ++k) {
                        const double va = pa[i * W + j + k], vb = pb[i * W + j + k];
                        sa += win[k] * va;
                        sb += win[k] * vb;
                        saa += win[k] * va * va;
                        sbb += win[k] * vb * vb;
                        sab += win[k] * va * vb;
                    }
                    const std::int64_t o = i * Wo + j;
                    ra[o] = sa; rb[o] = sb; raa[o] = saa; rbb[o] = sbb; rab[o] = sab;
                }
            for (std::int64_t i = 0; i < Ho; ++i)
                for (std::int64_t j = 0; j < Wo; ++j) {
                    double mu_a = 0, mu_b = 0, m_aa = 0, m_bb = 0, m_ab = 0;
                    for (int k = 0; k < 11; ++k) {
                        const std::int64_t o = (i + k) * Wo + j;
                        mu_a += win[k] * ra[o];
                        mu_b += win[k] * rb[o];
                        m_aa += win[k] * raa[o];
                        m_bb += win[k] * rbb[o];
                        m_ab += win[k] * rab[o];
                    }
                    const double va = m_aa - mu_a * mu_a;
                    const double vb = m_bb - mu_b * mu_b;
                    const double cov = m_ab - mu_a * mu_b;
                    total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                             ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
                }
        }
    return total / double(N * C * Ho * Wo);
}

}  // namespace wsr
