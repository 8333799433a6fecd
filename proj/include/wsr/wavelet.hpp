#pragma once

// 2-D Haar transform with orthonormal scaling: a single level maps one
// channel to four half-resolution bands (approximation plus horizontal,
// vertical and diagonal detail), preserves energy exactly, and is its own
// adjoint-inverse.  A constant input of 1 produces an approximation value of
// 2 per level.  Multi-level recurses on the approximation band only.

#include <vector>

#include "wsr/kernels.hpp"
#include "wsr/tensor.hpp"

namespace wsr::wavelet {

template <typename T>
struct SubBands {
    Tensor<T> ll, lh, hl, hh;  // lh = horizontal detail, hl = vertical detail
    int level = 1;
};

namespace detail {
template <typename T>
void check_even(const Tensor<T>& x, const char* what) {
    if (x.rank() != 4) throw DimensionError(std::string(what) + ": rank-4 input [N,C,H,W] expected");
    if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
        throw DimensionError(std::string(what) + ": odd spatial extent in " + shape_str(x.shape()));
}
}  // namespace detail

// Band-stacked form, channel blocks ordered [ll | lh | hl | hh].
template <typename T>
Tensor<T> dwt2_stacked(const Tensor<T>& x) {
    detail::check_even(x, "dwt2");
    const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out(Shape{N, 4 * C, H / 2, W / 2});
    kern::haar2_fwd(x.data(), out.data(), N, C, H, W, false);
    return out;
}

template <typename T>
Tensor<T> iwt2_stacked(const Tensor<T>& y) {
    if (y.rank() != 4 || y.dim(1) % 4 != 0)
        throw DimensionError("iwt2: rank-4 input with channels divisible by 4 expected");
    const auto N = y.dim(0), C = y.dim(1) / 4, Hh = y.dim(2), Wh = y.dim(3);
    Tensor<T> out(Shape{N, C, 2 * Hh, 2 * Wh});
    kern::haar2_inv(y.data(), out.data(), N, C, Hh, Wh, false);
    return out;
}

template <typename T>
SubBands<T> split_stacked(const Tensor<T>& s, int level = 1) {
    const auto N = s.dim(0), C4 = s.dim(1), Hh = s.dim(2), Wh = s.dim(3);
    const auto C = C4 / 4;
    SubBands<T> b;
    b.level = level;
    Tensor<T>* dst[4] = {&b.ll, &b.lh, &b.hl, &b.hh};
    for (int k = 0; k < 4; ++k) {
        *dst[k] = Tensor<T>(Shape{N, C, Hh, Wh});
        for (std::int64_t n = 0; n < N; ++n)
            std::memcpy(dst[k]->data() + n * C * Hh * Wh, s.data() + (n * C4 + k * C) * Hh * Wh,
                        static_cast<std::size_t>(C * Hh * Wh) * sizeof(T));
    }
    return b;
}

template <typename T>
Tensor<T> join_stacked(const SubBands<T>& b) {
    const auto N = b.ll.dim(0), C = b.ll.dim(1), Hh = b.ll.dim(2), Wh = b.ll.dim(3);
    const Tensor<T>* src[4] = {&b.ll, &b.lh, &b.hl, &b.hh};
    for (int k = 1; k < 4; ++k)
        if (!src[k]->same_shape(*src[0])) throw DimensionError("sub-band shapes disagree");
    Tensor<T> s(Shape{N, 4 * C, Hh, Wh});
    for (int k = 0; k < 4; ++k)
        for (std::int64_t n = 0; n < N; ++n)
            std::memcpy(s.data() + (n * 4 * C + k * C) * Hh * Wh, src[k]->data() + n * C * Hh * Wh,
                        static_cast<std::size_t>(C * Hh * Wh) * sizeof(T));
    return s;
}

template <typename T>
SubBands<T> dwt2(const Tensor<T>& x) {
    return split_stacked(dwt2_stacked(x), 1);
}

template <typename T>
Tensor<T> iwt2(const SubBands<T>& b) {
    return iwt2_stacked(join_stacked(b));
}

// levels >= 1; element [k] holds the bands produced at depth k+1 (each level
// transforms the previous level's approximation band).
template <typename T>
std::vector<SubBands<T>> dwt_multi(const Tensor<T>& x, int levels) {
    if (levels < 1) throw DimensionError("dwt_multi: levels must be >= 1");
    const std::int64_t div = std::int64_t(1) << levels;
    if (x.rank() != 4 || x.dim(2) % div != 0 || x.dim(3) % div != 0)
        throw DimensionError("dwt_multi: spatial extents must be divisible by 2^levels");
    std::vector<SubBands<T>> out;
    Tensor<T> cur = x;
    for (int k = 0; k < levels; ++k) {
        SubBands<T> b = dwt2(cur);
        b.level = k + 1;
        cur = b.ll;
        out.push_back(std::move(b));
    }
    return out;
}

template <typename T>
Tensor<T> iwt_multi(const std::vector<SubBands<T>>& levels) {
    if (levels.empty()) throw DimensionError("iwt_multi: no levels");
    Tensor<T> cur = levels.back().ll;
    for (int k = static_cast<int>(levels.size()) - 1; k >= 0; --k) {
        SubBands<T> b = levels[static_cast<std::size_t>(k)];
        b.ll = cur;
        cur = iwt2(b);
    }
    return cur;
}

template <typename T>
double frame_energy(const Tensor<T>& t) {
    double e = 0.0;
    for (std::int64_t i = 0; i < t.size(); ++i) e += static_cast<double>(t[i]) * static_cast<double>(t[i]);
    return e;
}

template <typename T>
double bands_energy(const SubBands<T>& b) {
    return frame_energy(b.ll) + frame_energy(b.lh) + frame_energy(b.hl) + frame_energy(b.hh);
}

}  // namespace wsr::wavelet
