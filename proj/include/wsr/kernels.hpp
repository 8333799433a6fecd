#pragma once

// Raw compute kernels.  Forward kernels overwrite their output; backward
// kernels accumulate (+=) so a value consumed by several ops sums its
// gradients naturally.  Every parallel loop distributes whole output elements
// and each element is computed in one fixed arithmetic order, so results are
// byte-identical for any thread count.  kern::ref holds deliberately plain
// serial formulations of the hot kernels; tests pin the parallel versions
// against them and the benchmark tool compares their speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "wsr/common.hpp"
#include "wsr/tensor.hpp"

namespace wsr::kern {

using std::int64_t;

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad, const char* what) {
    int64_t num = in + 2 * pad - k;
    if (num < 0 || num % stride != 0)
        throw DimensionError(std::string(what) + ": extent " + std::to_string(in) + " with kernel " +
                             std::to_string(k) + ", stride " + std::to_string(stride) + ", pad " +
                             std::to_string(pad) + " gives a fractional output size");
    return num / stride + 1;
}

template <typename T, typename F>
void map1(const T* x, T* y, int64_t n, F f) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && n > 4096)
    for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <typename T, typename F>
void map2(const T* a, const T* b, T* y, int64_t n, F f) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && n > 4096)
    for (int64_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
}

// ---------------------------------------------------------------------------
// conv2d, cross-correlation convention, zero padding, grouped channels.
// x [N,Cin,H,W], w [Cout,Cin/groups,kh,kw], b [Cout] (nullable), y [N,Cout,Ho,Wo].

template <typename T>
void conv2d_fwd(const T* x, const T* w, const T* b, T* y, int64_t N, int64_t Cin, int64_t H, int64_t W,
                int64_t Cout, int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t groups,
                int64_t Ho, int64_t Wo) {
    const int64_t cing = Cin / groups, coutg = Cout / groups;
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nc = 0; nc < N * Cout; ++nc) {
        const int64_t n = nc / Cout, co = nc % Cout;
        const int64_t g = co / coutg;
        const T* wco = w + co * cing * kh * kw;
        const T bias = b ? b[co] : T(0);
        for (int64_t oh = 0; oh < Ho; ++oh) {
            for (int64_t ow = 0; ow < Wo; ++ow) {
                T acc = bias;
                for (int64_t cl = 0; cl < cing; ++cl) {
                    const int64_t ci = g * cing + cl;
                    const T* xn = x + ((n * Cin + ci) * H) * W;
                    const T* wk = wco + cl * kh * kw;
                    for (int64_t r = 0; r < kh; ++r) {
                        const int64_t ih = oh * stride + r - pad;
                        if (ih < 0 || ih >= H) continue;
                        for (int64_t c = 0; c < kw; ++c) {
                            const int64_t iw = ow * stride + c - pad;
                            if (iw < 0 || iw >= W) continue;
                            acc += xn[ih * W + iw] * wk[r * kw + c];
                        }
                    }
                }
                y[((n * Cout + co) * Ho + oh) * Wo + ow] = acc;
            }
        }
    }
}

template <typename T>
void conv2d_bwd_input(T* gx, const T* gy, const T* w, int64_t N, int64_t Cin, int64_t H, int64_t W,
                      int64_t Cout, int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t groups,
                      int64_t Ho, int64_t Wo) {
    const int64_t cing = Cin / groups, coutg = Cout / groups;
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nc = 0; nc < N * Cin; ++nc) {
        const int64_t n = nc / Cin, ci = nc % Cin;
        const int64_t g = ci / cing, cl = ci % cing;
        for (int64_t ih = 0; ih < H; ++ih) {
            for (int64_t iw = 0; iw < W; ++iw) {
                T acc = T(0);
                for (int64_t co = g * coutg; co < (g + 1) * coutg; ++co) {
                    const T* wk = w + (co * cing + cl) * kh * kw;
                    const T* gyn = gy + ((n * Cout + co) * Ho) * Wo;
                    for (int64_t r = 0; r < kh; ++r) {
                        const int64_t num_h = ih + pad - r;
                        if (num_h < 0 || num_h % stride != 0) continue;
                        const int64_t oh = num_h / stride;
                        if (oh >= Ho) continue;
                        for (int64_t c = 0; c < kw; ++c) {
                            const int64_t num_w = iw + pad - c;
                            if (num_w < 0 || num_w % stride != 0) continue;
                            const int64_t ow = num_w / stride;
                            if (ow >= Wo) continue;
                            acc += gyn[oh * Wo + ow] * wk[r * kw + c];
                        }
                    }
                }
                gx[(nc * H + ih) * W + iw] += acc;
            }
        }
    }
}

template <typename T>
void conv2d_bwd_weight(T* gw, const T* gy, const T* x, int64_t N, int64_t Cin, int64_t H, int64_t W,
                       int64_t Cout, int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t groups,
                       int64_t Ho, int64_t Wo) {
    const int64_t cing = Cin / groups, coutg = Cout / groups;
    const int64_t nw = Cout * cing * kh * kw;
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t wi = 0; wi < nw; ++wi) {
        const int64_t co = wi / (cing * kh * kw);
        const int64_t rem = wi % (cing * kh * kw);
        const int64_t cl = rem / (kh * kw);
        const int64_t r = (rem / kw) % kh, c = rem % kw;
        const int64_t ci = (co / coutg) * cing + cl;
        T acc = T(0);
        for (int64_t n = 0; n < N; ++n) {
            const T* xn = x + ((n * Cin + ci) * H) * W;
            const T* gyn = gy + ((n * Cout + co) * Ho) * Wo;
            for (int64_t oh = 0; oh < Ho; ++oh) {
                const int64_t ih = oh * stride + r - pad;
                if (ih < 0 || ih >= H) continue;
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    const int64_t iw = ow * stride + c - pad;
                    if (iw < 0 || iw >= W) continue;
                    acc += gyn[oh * Wo + ow] * xn[ih * W + iw];
                }
            }
        }
        gw[wi] += acc;
    }
}

template <typename T>
void conv2d_bwd_bias(T* gb, const T* gy, int64_t N, int64_t Cout, int64_t Ho, int64_t Wo) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t co = 0; co < Cout; ++co) {
        T acc = T(0);
        for (int64_t n = 0; n < N; ++n) {
            const T* p = gy + ((n * Cout + co) * Ho) * Wo;
            for (int64_t i = 0; i < Ho * Wo; ++i) acc += p[i];
        }
        gb[co] += acc;
    }
}

// ---------------------------------------------------------------------------
// Causal depthwise conv1d.  x [N,D,L], w [D,K], b [D]; taps reach K-1 steps
// into the past, out-of-range reads are zero.

template <typename T>
void conv1d_dw_fwd(const T* x, const T* w, const T* b, T* y, int64_t N, int64_t D, int64_t L, int64_t K) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nd = 0; nd < N * D; ++nd) {
        const int64_t d = nd % D;
        const T* xr = x + nd * L;
        T* yr = y + nd * L;
        const T* wr = w + d * K;
        const T bias = b ? b[d] : T(0);
        for (int64_t t = 0; t < L; ++t) {
            T acc = bias;
            for (int64_t k = 0; k < K; ++k) {
                const int64_t u = t - (K - 1) + k;
                if (u >= 0) acc += wr[k] * xr[u];
            }
            yr[t] = acc;
        }
    }
}

template <typename T>
void conv1d_dw_bwd(T* gx, T* gw, T* gb, const T* gy, const T* x, const T* w, int64_t N, int64_t D,
                   int64_t L, int64_t K) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nd = 0; nd < N * D; ++nd) {
        const int64_t d = nd % D;
        const T* gyr = gy + nd * L;
        const T* wr = w + d * K;
        T* gxr = gx + nd * L;
        for (int64_t u = 0; u < L; ++u) {
            T acc = T(0);
            for (int64_t k = 0; k < K; ++k) {
                const int64_t t = u + (K - 1) - k;
                if (t < L) acc += wr[k] * gyr[t];
            }
            gxr[u] += acc;
        }
    }
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t d = 0; d < D; ++d) {
        for (int64_t k = 0; k < K; ++k) {
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* xr = x + (n * D + d) * L;
                const T* gyr = gy + (n * D + d) * L;
                for (int64_t t = 0; t < L; ++t) {
                    const int64_t u = t - (K - 1) + k;
                    if (u >= 0) acc += gyr[t] * xr[u];
                }
            }
            if (gw) gw[d * K + k] += acc;
        }
        if (gb) {
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* gyr = gy + (n * D + d) * L;
                for (int64_t t = 0; t < L; ++t) acc += gyr[t];
            }
            gb[d] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// Pointwise channel projection on sequences.  x [N,Cin,L], W [Cout,Cin],
// b [Cout] (nullable), y [N,Cout,L].

template <typename T>
void linear_seq_fwd(const T* x, const T* w, const T* b, T* y, int64_t N, int64_t Cin, int64_t Cout,
                    int64_t L) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t no = 0; no < N * Cout; ++no) {
        const int64_t n = no / Cout, o = no % Cout;
        const T* wr = w + o * Cin;
        T* yr = y + no * L;
        const T bias = b ? b[o] : T(0);
        for (int64_t t = 0; t < L; ++t) yr[t] = bias;
        for (int64_t i = 0; i < Cin; ++i) {
            const T wv = wr[i];
            const T* xr = x + (n * Cin + i) * L;
            for (int64_t t = 0; t < L; ++t) yr[t] += wv * xr[t];
        }
    }
}

template <typename T>
void linear_seq_bwd(T* gx, T* gw, T* gb, const T* gy, const T* x, const T* w, int64_t N, int64_t Cin,
                    int64_t Cout, int64_t L) {
    const int nt = thread_count();
    if (gx) {
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
        for (int64_t ni = 0; ni < N * Cin; ++ni) {
            const int64_t n = ni / Cin, i = ni % Cin;
            T* gxr = gx + ni * L;
            for (int64_t o = 0; o < Cout; ++o) {
                const T wv = w[o * Cin + i];
                const T* gyr = gy + (n * Cout + o) * L;
                for (int64_t t = 0; t < L; ++t) gxr[t] += wv * gyr[t];
            }
        }
    }
    if (gw) {
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
        for (int64_t oi = 0; oi < Cout * Cin; ++oi) {
            const int64_t o = oi / Cin, i = oi % Cin;
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* gyr = gy + (n * Cout + o) * L;
                const T* xr = x + (n * Cin + i) * L;
                for (int64_t t = 0; t < L; ++t) acc += gyr[t] * xr[t];
            }
            gw[oi] += acc;
        }
    }
    if (gb) {
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
        for (int64_t o = 0; o < Cout; ++o) {
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* gyr = gy + (n * Cout + o) * L;
                for (int64_t t = 0; t < L; ++t) acc += gyr[t];
            }
            gb[o] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// Single-level 2x2 Haar transform, orthonormal normalization (gain 2 per level
// on a constant input).  Band-stacked layout: x [N,C,H,W] <->
// y [N,4C,H/2,W/2] with channel blocks ordered low-low, low-high (horizontal
// detail), high-low (vertical detail), high-high (diagonal detail).
// The transform is orthogonal, so the adjoint of each direction is the other;
// `accumulate` selects += (used on gradient paths) instead of =.

template <typename T>
void haar2_fwd(const T* x, T* y, int64_t N, int64_t C, int64_t H, int64_t W, bool accumulate) {
    const int64_t Hh = H / 2, Wh = W / 2;
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const int64_t n = nc / C, c = nc % C;
        const T* xp = x + nc * H * W;
        T* ll = y + ((n * 4 * C + 0 * C + c) * Hh) * Wh;
        T* lh = y + ((n * 4 * C + 1 * C + c) * Hh) * Wh;
        T* hl = y + ((n * 4 * C + 2 * C + c) * Hh) * Wh;
        T* hh = y + ((n * 4 * C + 3 * C + c) * Hh) * Wh;
        for (int64_t i = 0; i < Hh; ++i) {
            for (int64_t j = 0; j < Wh; ++j) {
                const T a = xp[(2 * i) * W + 2 * j];
                const T b = xp[(2 * i) * W + 2 * j + 1];
                const T cc = xp[(2 * i + 1) * W + 2 * j];
                const T d = xp[(2 * i + 1) * W + 2 * j + 1];
                const int64_t o = i * Wh + j;
                const T vll = (a + b + cc + d) / T(2);
                const T vlh = (a - b + cc - d) / T(2);
                const T vhl = (a + b - cc - d) / T(2);
                const T vhh = (a - b - cc + d) / T(2);
                if (accumulate) {
                    ll[o] += vll;
                    lh[o] += vlh;
                    hl[o] += vhl;
                    hh[o] += vhh;
                } else {
                    ll[o] = vll;
                    lh[o] = vlh;
                    hl[o] = vhl;
                    hh[o] = vhh;
                }
            }
        }
    }
}

template <typename T>
void haar2_inv(const T* y, T* x, int64_t N, int64_t C, int64_t Hh, int64_t Wh, bool accumulate) {
    const int64_t H = Hh * 2, W = Wh * 2;
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const int64_t n = nc / C, c = nc % C;
        T* xp = x + nc * H * W;
        const T* ll = y + ((n * 4 * C + 0 * C + c) * Hh) * Wh;
        const T* lh = y + ((n * 4 * C + 1 * C + c) * Hh) * Wh;
        const T* hl = y + ((n * 4 * C + 2 * C + c) * Hh) * Wh;
        const T* hh = y + ((n * 4 * C + 3 * C + c) * Hh) * Wh;
        for (int64_t i = 0; i < Hh; ++i) {
            for (int64_t j = 0; j < Wh; ++j) {
                const int64_t o = i * Wh + j;
                const T vll = ll[o], vlh = lh[o], vhl = hl[o], vhh = hh[o];
                const T a = (vll + vlh + vhl + vhh) / T(2);
                const T b = (vll - vlh + vhl - vhh) / T(2);
                const T cc = (vll + vlh - vhl - vhh) / T(2);
                const T d = (vll - vlh - vhl + vhh) / T(2);
                T* r0 = xp + (2 * i) * W + 2 * j;
                T* r1 = xp + (2 * i + 1) * W + 2 * j;
                if (accumulate) {
                    r0[0] += a;
                    r0[1] += b;
                    r1[0] += cc;
                    r1[1] += d;
                } else {
                    r0[0] = a;
                    r0[1] = b;
                    r1[0] = cc;
                    r1[1] = d;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 2x2 average pooling and nearest-neighbour 2x upsampling.

template <typename T>
void avgpool2_fwd(const T* x, T* y, int64_t NC, int64_t H, int64_t W) {
    const int64_t Hh = H / 2, Wh = W / 2;
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nc = 0; nc < NC; ++nc) {
        const T* xp = x + nc * H * W;
        T* yp = y + nc * Hh * Wh;
        for (int64_t i = 0; i < Hh; ++i)
            for (int64_t j = 0; j < Wh; ++j)
                yp[i * Wh + j] = (xp[2 * i * W + 2 * j] + xp[2 * i * W + 2 * j + 1] +
                                  xp[(2 * i + 1) * W + 2 * j] + xp[(2 * i + 1) * W + 2 * j + 1]) /
                                 T(4);
    }
}

template <typename T>
void avgpool2_bwd(T* gx, const T* gy, int64_t NC, int64_t H, int64_t W) {
    const int64_t Hh = H / 2, Wh = W / 2;
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nc = 0; nc < NC; ++nc) {
        T* gxp = gx + nc * H * W;
        const T* gyp = gy + nc * Hh * Wh;
        for (int64_t i = 0; i < Hh; ++i)
            for (int64_t j = 0; j < Wh; ++j) {
                const T q = gyp[i * Wh + j] / T(4);
                gxp[2 * i * W + 2 * j] += q;
                gxp[2 * i * W + 2 * j + 1] += q;
                gxp[(2 * i + 1) * W + 2 * j] += q;
                gxp[(2 * i + 1) * W + 2 * j + 1] += q;
            }
    }
}

template <typename T>
void upsample2_fwd(const T* x, T* y, int64_t NC, int64_t H, int64_t W) {
    const int64_t H2 = H * 2, W2 = W * 2;
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nc = 0; nc < NC; ++nc) {
        const T* xp = x + nc * H * W;
        T* yp = y + nc * H2 * W2;
        for (int64_t i = 0; i < H2; ++i)
            for (int64_t j = 0; j < W2; ++j) yp[i * W2 + j] = xp[(i / 2) * W + j / 2];
    }
}

template <typename T>
void upsample2_bwd(T* gx, const T* gy, int64_t NC, int64_t H, int64_t W) {
    const int64_t W2 = W * 2;
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nc = 0; nc < NC; ++nc) {
        T* gxp = gx + nc * H * W;
        const T* gyp = gy + nc * 4 * H * W;
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j)
                gxp[i * W + j] += gyp[2 * i * W2 + 2 * j] + gyp[2 * i * W2 + 2 * j + 1] +
                                  gyp[(2 * i + 1) * W2 + 2 * j] + gyp[(2 * i + 1) * W2 + 2 * j + 1];
    }
}

// ---------------------------------------------------------------------------
// Batched matmul.  a [B,M,K] x b [B,K,Nn] -> c [B,M,Nn].  B=1 covers the 2-D
// case.  Accumulation order over k is ascending for every output element.

template <typename T>
void matmul_fwd(const T* a, const T* b, T* c, int64_t B, int64_t M, int64_t K, int64_t Nn) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t bm = 0; bm < B * M; ++bm) {
        const int64_t bb = bm / M, m = bm % M;
        const T* ar = a + (bb * M + m) * K;
        const T* bp = b + bb * K * Nn;
        T* cr = c + (bb * M + m) * Nn;
        for (int64_t j = 0; j < Nn; ++j) cr[j] = T(0);
        for (int64_t k = 0; k < K; ++k) {
            const T av = ar[k];
            const T* br = bp + k * Nn;
            for (int64_t j = 0; j < Nn; ++j) cr[j] += av * br[j];
        }
    }
}

template <typename T>
void matmul_bwd_a(T* ga, const T* gc, const T* b, int64_t B, int64_t M, int64_t K, int64_t Nn) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t bm = 0; bm < B * M; ++bm) {
        const int64_t bb = bm / M, m = bm % M;
        const T* gcr = gc + (bb * M + m) * Nn;
        const T* bp = b + bb * K * Nn;
        T* gar = ga + (bb * M + m) * K;
        for (int64_t k = 0; k < K; ++k) {
            const T* br = bp + k * Nn;
            T acc = T(0);
            for (int64_t j = 0; j < Nn; ++j) acc += gcr[j] * br[j];
            gar[k] += acc;
        }
    }
}

template <typename T>
void matmul_bwd_b(T* gb, const T* gc, const T* a, int64_t B, int64_t M, int64_t K, int64_t Nn) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t bk = 0; bk < B * K; ++bk) {
        const int64_t bb = bk / K, k = bk % K;
        T* gbr = gb + (bb * K + k) * Nn;
        for (int64_t m = 0; m < M; ++m) {
            const T av = a[(bb * M + m) * K + k];
            const T* gcr = gc + (bb * M + m) * Nn;
            for (int64_t j = 0; j < Nn; ++j) gbr[j] += av * gcr[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Softmax along one axis, expressed as outer/len/inner strides.

template <typename T>
void softmax_fwd(const T* x, T* y, int64_t outer, int64_t len, int64_t inner) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t oi = 0; oi < outer * inner; ++oi) {
        const int64_t o = oi / inner, in = oi % inner;
        const T* xs = x + o * len * inner + in;
        T* ys = y + o * len * inner + in;
        T mx = xs[0];
        for (int64_t l = 1; l < len; ++l) mx = std::max(mx, xs[l * inner]);
        T sum = T(0);
        for (int64_t l = 0; l < len; ++l) {
            const T e = std::exp(xs[l * inner] - mx);
            ys[l * inner] = e;
            sum += e;
        }
        for (int64_t l = 0; l < len; ++l) ys[l * inner] /= sum;
    }
}

template <typename T>
void softmax_bwd(T* gx, const T* gy, const T* y, int64_t outer, int64_t len, int64_t inner) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t oi = 0; oi < outer * inner; ++oi) {
        const int64_t o = oi / inner, in = oi % inner;
        const T* gys = gy + o * len * inner + in;
        const T* ys = y + o * len * inner + in;
        T* gxs = gx + o * len * inner + in;
        T dot = T(0);
        for (int64_t l = 0; l < len; ++l) dot += gys[l * inner] * ys[l * inner];
        for (int64_t l = 0; l < len; ++l) gxs[l * inner] += (gys[l * inner] - dot) * ys[l * inner];
    }
}

// ---------------------------------------------------------------------------
// Selective scan.  x,delta [N,D,L]; A [D,S] (negative entries keep |Abar|<1);
// B,C [N,S,L]; Dskip [D]; y [N,D,L].  Discretization: Abar = exp(delta*A),
// Bbar = delta*B.  When cache pointers are given, per-step Abar and the state
// trajectory h are stored as [N,D,L,S] for the backward pass.

template <typename T>
void scan_fwd(const T* x, const T* A, const T* B, const T* C, const T* delta, const T* Dskip, T* y,
              int64_t N, int64_t D, int64_t L, int64_t S, T* cache_abar, T* cache_h) {
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t nd = 0; nd < N * D; ++nd) {
        const int64_t n = nd / D, d = nd % D;
        const T* xr = x + nd * L;
        const T* dr = delta + nd * L;
        const T* Ar = A + d * S;
        const T* Bn = B + n * S * L;
        const T* Cn = C + n * S * L;
        T* yr = y + nd * L;
        std::vector<T> h(static_cast<std::size_t>(S), T(0));
        for (int64_t t = 0; t < L; ++t) {
            const T dt = dr[t];
            const T xv = xr[t];
            T acc = T(0);
            for (int64_t s = 0; s < S; ++s) {
                const T abar = std::exp(dt * Ar[s]);
                const T hb = abar * h[static_cast<std::size_t>(s)] + dt * Bn[s * L + t] * xv;
                h[static_cast<std::size_t>(s)] = hb;
                acc += Cn[s * L + t] * hb;
                if (cache_abar) cache_abar[(nd * L + t) * S + s] = abar;
                if (cache_h) cache_h[(nd * L + t) * S + s] = hb;
            }
            yr[t] = acc + Dskip[d] * xv;
        }
    }
}

// Backward of scan_fwd.  Parallel over batch entries only: gB/gC accumulate
// across d inside one batch entry, so d stays a serial loop.  gA/gD sum over
// the batch; per-entry partials are reduced in ascending n afterwards.
template <typename T>
void scan_bwd(const T* gy, const T* x, const T* A, const T* B, const T* C, const T* delta,
              const T* Dskip, const T* cache_abar, const T* cache_h, T* gx, T* gA, T* gB, T* gC,
              T* gdelta, T* gD, int64_t N, int64_t D, int64_t L, int64_t S) {
    std::vector<T> partA(static_cast<std::size_t>(N * D * S), T(0));
    std::vector<T> partD(static_cast<std::size_t>(N * D), T(0));
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t n = 0; n < N; ++n) {
        std::vector<T> dh(static_cast<std::size_t>(S));
        T* pA = partA.data() + n * D * S;
        T* pD = partD.data() + n * D;
        for (int64_t d = 0; d < D; ++d) {
            const int64_t nd = n * D + d;
            const T* xr = x + nd * L;
            const T* dr = delta + nd * L;
            const T* Ar = A + d * S;
            const T* Bn = B + n * S * L;
            const T* Cn = C + n * S * L;
            const T* gyr = gy + nd * L;
            const T* ab = cache_abar + nd * L * S;
            const T* hs = cache_h + nd * L * S;
            T* gxr = gx + nd * L;
            T* gdr = gdelta + nd * L;
            T* gBn = gB + n * S * L;
            T* gCn = gC + n * S * L;
            std::fill(dh.begin(), dh.end(), T(0));
            for (int64_t t = L - 1; t >= 0; --t) {
                const T gyv = gyr[t];
                const T dt = dr[t];
                const T xv = xr[t];
                pD[d] += gyv * xv;
                T gx_acc = gyv * Dskip[d];
                T gd_acc = T(0);
                for (int64_t s = 0; s < S; ++s) {
                    const T abar = ab[t * S + s];
                    const T hprev = t > 0 ? hs[(t - 1) * S + s] : T(0);
                    const T bv = Bn[s * L + t];
                    // dh[s] currently carries abar[t+1]*dL/dh_{t+1}; add the
                    // direct y_t = sum_s C h contribution.
                    const T dhv = dh[static_cast<std::size_t>(s)] + gyv * Cn[s * L + t];
                    gCn[s * L + t] += gyv * hs[t * S + s];
                    pA[d * S + s] += dhv * abar * hprev * dt;
                    gd_acc += dhv * (abar * Ar[s] * hprev + bv * xv);
                    gBn[s * L + t] += dhv * dt * xv;
                    gx_acc += dhv * dt * bv;
                    dh[static_cast<std::size_t>(s)] = dhv * abar;
                }
                gxr[t] += gx_acc;
                gdr[t] += gd_acc;
            }
        }
    }
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t d = 0; d < D; ++d) {
            for (int64_t s = 0; s < S; ++s) gA[d * S + s] += partA[(n * D + d) * S + s];
            gD[d] += partD[n * D + d];
        }
    }
}

// ---------------------------------------------------------------------------
// Quadratic-time single-head attention over one sequence, used only as the
// complexity foil in benchmarks.  x [Dm,L]; wq/wk/wv [Dm,Dm].  Scores are
// streamed one query at a time so memory stays O(Dm*L).

template <typename T>
void attention_reference(const T* x, const T* wq, const T* wk, const T* wv, T* y, int64_t Dm,
                         int64_t L) {
    std::vector<T> q(static_cast<std::size_t>(Dm * L)), k(q.size()), v(q.size());
    linear_seq_fwd(x, wq, static_cast<const T*>(nullptr), q.data(), 1, Dm, Dm, L);
    linear_seq_fwd(x, wk, static_cast<const T*>(nullptr), k.data(), 1, Dm, Dm, L);
    linear_seq_fwd(x, wv, static_cast<const T*>(nullptr), v.data(), 1, Dm, Dm, L);
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(Dm));
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t t = 0; t < L; ++t) {
        std::vector<T> row(static_cast<std::size_t>(L));
        T mx = -std::numeric_limits<T>::infinity();
        for (int64_t u = 0; u < L; ++u) {
            T s = T(0);
            for (int64_t d = 0; d < Dm; ++d) s += q[d * L + t] * k[d * L + u];
            s *= inv_sqrt;
            row[static_cast<std::size_t>(u)] = s;
            mx = std::max(mx, s);
        }
        T sum = T(0);
        for (int64_t u = 0; u < L; ++u) {
            const T e = std::exp(row[static_cast<std::size_t>(u)] - mx);
            row[static_cast<std::size_t>(u)] = e;
            sum += e;
        }
        for (int64_t d = 0; d < Dm; ++d) {
            T acc = T(0);
            for (int64_t u = 0; u < L; ++u) acc += row[static_cast<std::size_t>(u)] * v[d * L + u];
            y[d * L + t] = acc / sum;
        }
    }
}

// ---------------------------------------------------------------------------
// Plain serial formulations kept as oracles for the parallel kernels above.

namespace ref {

template <typename T>
void conv2d(const T* x, const T* w, const T* b, T* y, int64_t N, int64_t Cin, int64_t H, int64_t W,
            int64_t Cout, int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t groups,
            int64_t Ho, int64_t Wo) {
    const int64_t cing = Cin / groups, coutg = Cout / groups;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t oh = 0; oh < Ho; ++oh)
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    T acc = b ? b[co] : T(0);
                    const int64_t g = co / coutg;
                    for (int64_t cl = 0; cl < cing; ++cl)
                        for (int64_t r = 0; r < kh; ++r)
                            for (int64_t c = 0; c < kw; ++c) {
                                const int64_t ih = oh * stride + r - pad;
                                const int64_t iw = ow * stride + c - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x[((n * Cin + g * cing + cl) * H + ih) * W + iw] *
                                       w[((co * cing + cl) * kh + r) * kw + c];
                            }
                    y[((n * Cout + co) * Ho + oh) * Wo + ow] = acc;
                }
}

// Block-centric Haar: walks 2x2 input blocks and writes all four bands.
template <typename T>
void haar2_fwd(const T* x, T* y, int64_t N, int64_t C, int64_t H, int64_t W) {
    const int64_t Hh = H / 2, Wh = W / 2;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < Hh; ++i)
                for (int64_t j = 0; j < Wh; ++j) {
                    const T* xp = x + ((n * C + c) * H) * W;
                    const T a = xp[2 * i * W + 2 * j], b = xp[2 * i * W + 2 * j + 1];
                    const T cc = xp[(2 * i + 1) * W + 2 * j], d = xp[(2 * i + 1) * W + 2 * j + 1];
                    y[((n * 4 * C + 0 * C + c) * Hh + i) * Wh + j] = (a + b + cc + d) / T(2);
                    y[((n * 4 * C + 1 * C + c) * Hh + i) * Wh + j] = (a - b + cc - d) / T(2);
                    y[((n * 4 * C + 2 * C + c) * Hh + i) * Wh + j] = (a + b - cc - d) / T(2);
                    y[((n * 4 * C + 3 * C + c) * Hh + i) * Wh + j] = (a - b - cc + d) / T(2);
                }
}

template <typename T>
void haar2_inv(const T* y, T* x, int64_t N, int64_t C, int64_t Hh, int64_t Wh) {
    const int64_t H = Hh * 2, W = Wh * 2;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < Hh; ++i)
                for (int64_t j = 0; j < Wh; ++j) {
                    const T vll = y[((n * 4 * C + 0 * C + c) * Hh + i) * Wh + j];
                    const T vlh = y[((n * 4 * C + 1 * C + c) * Hh + i) * Wh + j];
                    const T vhl = y[((n * 4 * C + 2 * C + c) * Hh + i) * Wh + j];
                    const T vhh = y[((n * 4 * C + 3 * C + c) * Hh + i) * Wh + j];
                    T* xp = x + ((n * C + c) * H) * W;
                    xp[2 * i * W + 2 * j] = (vll + vlh + vhl + vhh) / T(2);
                    xp[2 * i * W + 2 * j + 1] = (vll - vlh + vhl - vhh) / T(2);
                    xp[(2 * i + 1) * W + 2 * j] = (vll + vlh - vhl - vhh) / T(2);
                    xp[(2 * i + 1) * W + 2 * j + 1] = (vll - vlh - vhl + vhh) / T(2);
                }
}

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t B, int64_t M, int64_t K, int64_t Nn) {
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t m = 0; m < M; ++m)
            for (int64_t j = 0; j < Nn; ++j) {
                T acc = T(0);
                for (int64_t k = 0; k < K; ++k)
                    acc += a[(bb * M + m) * K + k] * b[(bb * K + k) * Nn + j];
                c[(bb * M + m) * Nn + j] = acc;
            }
}

}  // namespace ref

// Tensor-level wrapper mirroring the raw kernel.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, int64_t stride,
                 int64_t pad, int64_t groups) {
    const int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int64_t Ho = conv_out_extent(H, kh, stride, pad, "conv2d h");
    const int64_t Wo = conv_out_extent(W, kw, stride, pad, "conv2d w");
    Tensor<T> y(Shape{N, Cout, Ho, Wo});
    conv2d_fwd<T>(x.data(), w.data(), b ? b->data() : nullptr, y.data(), N, Cin, H, W, Cout, kh,
                  kw, stride, pad, groups, Ho, Wo);
    return y;
}

template <typename T>
Tensor<T> haar2(const Tensor<T>& x) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y(Shape{N, 4 * C, H / 2, W / 2});
    haar2_fwd<T>(x.data(), y.data(), N, C, H, W, false);
    return y;
}

template <typename T>
Tensor<T> haar2_unsplit(const Tensor<T>& y) {
    const int64_t N = y.dim(0), C = y.dim(1) / 4, Hh = y.dim(2), Wh = y.dim(3);
    Tensor<T> x(Shape{N, C, 2 * Hh, 2 * Wh});
    haar2_inv<T>(y.data(), x.data(), N, C, Hh, Wh, false);
    return x;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), Nn = b.dim(2);
    Tensor<T> c(Shape{B, M, Nn});
    matmul_fwd<T>(a.data(), b.data(), c.data(), B, M, K, Nn);
    return c;
}

template <typename T>
void scan(const Tensor<T>& x, const Tensor<T>& A, const Tensor<T>& B, const Tensor<T>& C,
          const Tensor<T>& delta, const Tensor<T>& Dskip, Tensor<T>& y, T* cache_abar = nullptr,
          T* cache_h = nullptr) {
    const int64_t N = x.dim(0), D = x.dim(1), L = x.dim(2), S = A.dim(1);
    scan_fwd<T>(x.data(), A.data(), B.data(), C.data(), delta.data(), Dskip.data(), y.data(), N, D,
                L, S, cache_abar, cache_h);
}

template <typename T>
Tensor<T> attention(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk,
                    const Tensor<T>& wv) {
    const int64_t Dm = x.dim(0), L = x.dim(1);
    Tensor<T> y(Shape{Dm, L});
    attention_reference<T>(x.data(), wq.data(), wk.data(), wv.data(), y.data(), Dm, L);
    return y;
}

namespace ref {

template <typename T>
Tensor<T> conv2d_t(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, int64_t stride,
                   int64_t pad, int64_t groups) {
    const int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int64_t Ho = conv_out_extent(H, kh, stride, pad, "conv2d h");
    const int64_t Wo = conv_out_extent(W, kw, stride, pad, "conv2d w");
    Tensor<T> y(Shape{N, Cout, Ho, Wo});
    conv2d<T>(x.data(), w.data(), b ? b->data() : nullptr, y.data(), N, Cin, H, W, Cout, kh, kw,
              stride, pad, groups, Ho, Wo);
    return y;
}

template <typename T>
Tensor<T> haar2_t(const Tensor<T>& x) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y(Shape{N, 4 * C, H / 2, W / 2});
    haar2_fwd<T>(x.data(), y.data(), N, C, H, W);
    return y;
}

template <typename T>
Tensor<T> haar2_inv_t(const Tensor<T>& y) {
    const int64_t N = y.dim(0), C = y.dim(1) / 4, Hh = y.dim(2), Wh = y.dim(3);
    Tensor<T> x(Shape{N, C, 2 * Hh, 2 * Wh});
    haar2_inv<T>(y.data(), x.data(), N, C, Hh, Wh);
    return x;
}

template <typename T>
Tensor<T> matmul_t(const Tensor<T>& a, const Tensor<T>& b) {
    const int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), Nn = b.dim(2);
    Tensor<T> c(Shape{B, M, Nn});
    matmul<T>(a.data(), b.data(), c.data(), B, M, K, Nn);
    return c;
}

}  // namespace ref

}  // namespace wsr::kern
