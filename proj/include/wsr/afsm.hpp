#pragma once

// Scan-order machinery: flattening a 2-D sub-band into a sequence in an order
// matched to that band's dominant structure.  Approximation and horizontal
// detail read row-major, vertical detail reads column-major, diagonal detail
// walks anti-diagonals (groups of constant i+j, ascending, rows ascending
// inside each group).  Each band kind scans in two patterns, and every
// pattern also runs reversed; the four directional results are merged by an
// element-wise mean after mapping back to image order.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wsr/tensor.hpp"

namespace wsr::afsm {

enum class BandKind { approx = 0, horiz = 1, vert = 2, diag = 3 };

inline const char* band_kind_name(BandKind k) {
    switch (k) {
        case BandKind::approx: return "approx";
        case BandKind::horiz: return "horiz";
        case BandKind::vert: return "vert";
        case BandKind::diag: return "diag";
    }
    return "?";
}

// order[t] = flat row-major index visited at step t.
struct ScanOrder {
    std::vector<std::int64_t> order;
    std::int64_t h = 0, w = 0;
};

ScanOrder raster_rows(std::int64_t h, std::int64_t w);
ScanOrder raster_cols(std::int64_t h, std::int64_t w);
ScanOrder antidiagonal(std::int64_t h, std::int64_t w);
ScanOrder reversed(const ScanOrder& o);

// Inverse permutation: inv[order[t]] = t.
std::vector<std::int64_t> invert_order(const std::vector<std::int64_t>& order);

// The two scan patterns for a band kind (before direction reversal).
std::vector<ScanOrder> scan_orders(BandKind kind, std::int64_t h, std::int64_t w);

// All four directional passes for a kind: each pattern forward and reversed.
std::vector<ScanOrder> directional_orders(BandKind kind, std::int64_t h, std::int64_t w);

// ---------------------------------------------------------------------------

// x [N,C,H,W] -> sequences [N,C,H*W] following the order.
template <typename T>
Tensor<T> apply_order(const Tensor<T>& x, const ScanOrder& o) {
    if (x.rank() != 4 || x.dim(2) != o.h || x.dim(3) != o.w)
        throw DimensionError("apply_order: input does not match the order's extents");
    const std::int64_t outer = x.dim(0) * x.dim(1), L = o.h * o.w;
    Tensor<T> y(Shape{x.dim(0), x.dim(1), L});
    for (std::int64_t oc = 0; oc < outer; ++oc) {
        const T* src = x.data() + oc * L;
        T* dst = y.data() + oc * L;
        for (std::int64_t t = 0; t < L; ++t) dst[t] = src[o.order[static_cast<std::size_t>(t)]];
    }
    return y;
}

// sequences [N,C,L] -> x [N,C,H,W], undoing apply_order.
template <typename T>
Tensor<T> unapply_order(const Tensor<T>& s, const ScanOrder& o) {
    const std::int64_t L = o.h * o.w;
    if (s.rank() != 3 || s.dim(2) != L)
        throw DimensionError("unapply_order: sequence length does not match the order");
    const std::int64_t outer = s.dim(0) * s.dim(1);
    Tensor<T> x(Shape{s.dim(0), s.dim(1), o.h, o.w});
    for (std::int64_t oc = 0; oc < outer; ++oc) {
        const T* src = s.data() + oc * L;
        T* dst = x.data() + oc * L;
        for (std::int64_t t = 0; t < L; ++t) dst[o.order[static_cast<std::size_t>(t)]] = src[t];
    }
    return x;
}

template <typename T>
Tensor<T> merge_directional(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("merge_directional: no inputs");
    Tensor<T> out(parts[0].shape());
    for (const auto& p : parts) {
        if (!p.same_shape(out)) throw DimensionError("merge_directional: shape mismatch");
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] += p[i];
    }
    const T inv = T(1) / static_cast<T>(parts.size());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= inv;
    return out;
}

}  // namespace wsr::afsm
