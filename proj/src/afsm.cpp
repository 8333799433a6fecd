#include "wsr/afsm.hpp"

namespace wsr::afsm {

ScanOrder raster_rows(std::int64_t h, std::int64_t w) {
    if (h < 1 || w < 1) throw DimensionError("scan order: extents must be positive");
    ScanOrder o;
    o.h = h;
    o.w = w;
    o.order.resize(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h * w; ++i) o.order[static_cast<std::size_t>(i)] = i;
    return o;
}

ScanOrder raster_cols(std::int64_t h, std::int64_t w) {
    if (h < 1 || w < 1) throw DimensionError("scan order: extents must be positive");
    ScanOrder o;
    o.h = h;
    o.w = w;
    o.order.reserve(static_cast<std::size_t>(h * w));
    for (std::int64_t j = 0; j < w; ++j)
        for (std::int64_t i = 0; i < h; ++i) o.order.push_back(i * w + j);
    return o;
}

ScanOrder antidiagonal(std::int64_t h, std::int64_t w) {
    if (h < 1 || w < 1) throw DimensionError("scan order: extents must be positive");
    ScanOrder o;
    o.h = h;
    o.w = w;
    o.order.reserve(static_cast<std::size_t>(h * w));
    for (std::int64_t s = 0; s <= h + w - 2; ++s) {
        const std::int64_t i0 = s < w ? 0 : s - w + 1;
        const std::int64_t i1 = s < h ? s : h - 1;
        for (std::int64_t i = i0; i <= i1; ++i) o.order.push_back(i * w + (s - i));
    }
    return o;
}

ScanOrder reversed(const ScanOrder& o) {
    ScanOrder r;
    r.h = o.h;
    r.w = o.w;
    r.order.assign(o.order.rbegin(), o.order.rend());
    return r;
}

std::vector<std::int64_t> invert_order(const std::vector<std::int64_t>& order) {
    std::vector<std::int64_t> inv(order.size(), -1);
    for (std::size_t t = 0; t < order.size(); ++t) {
        const std::int64_t p = order[t];
        if (p < 0 || p >= static_cast<std::int64_t>(order.size()) || inv[static_cast<std::size_t>(p)] != -1)
            throw DimensionError("invert_order: not a permutation");
        inv[static_cast<std::size_t>(p)] = static_cast<std::int64_t>(t);
    }
    return inv;
}

std::vector<ScanOrder> scan_orders(BandKind kind, std::int64_t h, std::int64_t w) {
    switch (kind) {
        case BandKind::approx:
        case BandKind::horiz:
        case BandKind::vert:
            // row-major and column-major sweeps cover both axes.
            return {raster_rows(h, w), raster_cols(h, w)};
        case BandKind::diag:
            // diagonal detail walks anti-diagonals, both ways.
            return {antidiagonal(h, w), reversed(antidiagonal(h, w))};
    }
    throw ConfigError("scan_orders: unknown band kind");
}

std::vector<ScanOrder> directional_orders(BandKind kind, std::int64_t h, std::int64_t w) {
    std::vector<ScanOrder> out;
    for (const ScanOrder& o : scan_orders(kind, h, w)) {
        out.push_back(o);
        out.push_back(reversed(o));
    }
    return out;
}

}  // namespace wsr::afsm
