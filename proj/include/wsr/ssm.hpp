#pragma once

// Selective state-space sequence kernel.  Discretization follows the
// simplified form Abar = exp(delta*A), Bbar = delta*B (not the full
// zero-order-hold expression); the recurrence is h_t = Abar h_{t-1} +
// Bbar x_t, y_t = C h_t + D x_t with h_0 = 0.  naive_recurrence materializes
// the discretized operators and loops literally; it is the oracle the fused
// linear-pass scan is tested against, and the serial reference for the
// benchmark tool.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wsr/graph.hpp"
#include "wsr/kernels.hpp"
#include "wsr/params.hpp"
#include "wsr/tensor.hpp"

namespace wsr::ssm {

// A [D,S] strictly negative; B, C [N,S,L]; Dskip [D]; delta [N,D,L] positive.
template <typename T>
struct SsmParams {
    Tensor<T> A;
    Tensor<T> B;
    Tensor<T> C;
    Tensor<T> Dskip;
    Tensor<T> delta;
};

template <typename T>
void validate(const SsmParams<T>& p, std::int64_t N, std::int64_t D, std::int64_t L) {
    const std::int64_t S = p.A.rank() == 2 ? p.A.dim(1) : -1;
    if (p.A.rank() != 2 || p.A.dim(0) != D) throw DimensionError("ssm: A must be [D,S]");
    if (p.B.shape() != Shape{N, S, L} || p.C.shape() != Shape{N, S, L})
        throw DimensionError("ssm: B and C must be [N,S,L]");
    if (p.Dskip.shape() != Shape{D}) throw DimensionError("ssm: Dskip must be [D]");
    if (p.delta.shape() != Shape{N, D, L}) throw DimensionError("ssm: delta must be [N,D,L]");
    for (std::int64_t i = 0; i < p.A.size(); ++i)
        if (!(p.A[i] < T(0))) throw NumericError("ssm: A entries must be strictly negative");
    for (std::int64_t i = 0; i < p.delta.size(); ++i)
        if (!(p.delta[i] > T(0))) throw NumericError("ssm: delta entries must be strictly positive");
}

// Elementwise Abar = exp(delta*A), Bbar = delta*B, both [N,D,L,S].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> discretize(const Tensor<T>& A, const Tensor<T>& B,
                                           const Tensor<T>& delta) {
    if (A.rank() != 2 || B.rank() != 3 || delta.rank() != 3)
        throw DimensionError("discretize: A [D,S], B [N,S,L], delta [N,D,L] expected");
    const std::int64_t D = A.dim(0), S = A.dim(1);
    const std::int64_t N = delta.dim(0), L = delta.dim(2);
    if (delta.dim(1) != D || B.dim(0) != N || B.dim(1) != S || B.dim(2) != L)
        throw DimensionError("discretize: extents disagree");
    for (std::int64_t i = 0; i < delta.size(); ++i)
        if (!(delta[i] > T(0))) throw NumericError("discretize: delta must be strictly positive");
    Tensor<T> abar(Shape{N, D, L, S});
    Tensor<T> bbar(Shape{N, D, L, S});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t d = 0; d < D; ++d)
            for (std::int64_t t = 0; t < L; ++t) {
                const T dt = delta[(n * D + d) * L + t];
                for (std::int64_t s = 0; s < S; ++s) {
                    const std::int64_t o = ((n * D + d) * L + t) * S + s;
                    abar[o] = std::exp(dt * A[d * S + s]);
                    bbar[o] = dt * B[(n * S + s) * L + t];
                }
            }
    return {std::move(abar), std::move(bbar)};
}

// Literal sequential evaluation of the recurrence; the correctness oracle.
template <typename T>
Tensor<T> naive_recurrence(const SsmParams<T>& p, const Tensor<T>& x) {
    if (x.rank() != 3) throw DimensionError("naive_recurrence: x must be [N,D,L]");
    const std::int64_t N = x.dim(0), D = x.dim(1), L = x.dim(2);
    validate(p, N, D, L);
    auto [abar, bbar] = discretize(p.A, p.B, p.delta);
    const std::int64_t S = p.A.dim(1);
    Tensor<T> y(x.shape());
    std::vector<T> h(static_cast<std::size_t>(S));
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t d = 0; d < D; ++d) {
            std::fill(h.begin(), h.end(), T(0));
            for (std::int64_t t = 0; t < L; ++t) {
                const T xv = x[(n * D + d) * L + t];
                T acc = T(0);
                for (std::int64_t s = 0; s < S; ++s) {
                    const std::int64_t o = ((n * D + d) * L + t) * S + s;
                    h[static_cast<std::size_t>(s)] =
                        abar[o] * h[static_cast<std::size_t>(s)] + bbar[o] * xv;
                    acc += p.C[(n * S + s) * L + t] * h[static_cast<std::size_t>(s)];
                }
                y[(n * D + d) * L + t] = acc + p.Dskip[d] * xv;
            }
        }
    return y;
}

// Fused linear pass, O(L*D*S) work and O(S) live state per (batch, channel).
template <typename T>
Tensor<T> selective_scan(const SsmParams<T>& p, const Tensor<T>& x) {
    if (x.rank() != 3) throw DimensionError("selective_scan: x must be [N,D,L]");
    const std::int64_t N = x.dim(0), D = x.dim(1), L = x.dim(2);
    validate(p, N, D, L);
    Tensor<T> y(x.shape());
    kern::scan_fwd(x.data(), p.A.data(), p.B.data(), p.C.data(), p.delta.data(), p.Dskip.data(),
                   y.data(), N, D, L, p.A.dim(1), static_cast<T*>(nullptr), static_cast<T*>(nullptr));
    return y;
}

// ---------------------------------------------------------------------------
// The selective block: projections around the scan, causal depthwise conv,
// silu gate.  B, C and delta are produced per timestep from the running
// sequence, which is what makes the scan input-dependent.

struct SsmDefaults {
    std::int64_t n_state = 16;
    std::int64_t expand = 2;
    std::int64_t conv_kernel = 4;
};

template <typename T>
struct MambaBranch {
    std::int64_t d_model = 0, d_inner = 0, n_state = 0, dt_rank = 0, conv_kernel = 0;
    int w_in = -1;             // [2*d_inner, d_model]
    int w_conv = -1, b_conv = -1;  // [d_inner, K], [d_inner]
    int w_x = -1;              // [dt_rank + 2*n_state, d_inner]
    int w_dt = -1, b_dt = -1;  // [d_inner, dt_rank], [d_inner]
    int a_log = -1;            // [d_inner, n_state]; A = -exp(a_log)
    int d_skip = -1;           // [d_inner]
    int w_out = -1;            // [d_model, d_inner]

    static MambaBranch init(ParamStore<T>& ps, const std::string& prefix, std::int64_t d_model,
                            const SsmDefaults& dflt, Pcg32& rng) {
        MambaBranch m;
        m.d_model = d_model;
        m.d_inner = dflt.expand * d_model;
        m.n_state = dflt.n_state;
        m.conv_kernel = dflt.conv_kernel;
        m.dt_rank = std::max<std::int64_t>(1, (d_model + 15) / 16);
        m.w_in = ps.add(prefix + ".w_in", fanin_uniform<T>({2 * m.d_inner, d_model}, d_model, rng));
        m.w_conv = ps.add(prefix + ".w_conv",
                          fanin_uniform<T>({m.d_inner, m.conv_kernel}, m.conv_kernel, rng));
        m.b_conv = ps.add(prefix + ".b_conv", Tensor<T>(Shape{m.d_inner}));
        m.w_x = ps.add(prefix + ".w_x",
                       fanin_uniform<T>({m.dt_rank + 2 * m.n_state, m.d_inner}, m.d_inner, rng));
        m.w_dt = ps.add(prefix + ".w_dt", fanin_uniform<T>({m.d_inner, m.dt_rank}, m.dt_rank, rng));
        // bias chosen so softplus(b) is log-uniform in [1e-3, 1e-1]
        Tensor<T> bdt(Shape{m.d_inner});
        for (std::int64_t i = 0; i < m.d_inner; ++i) {
            const double u = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
            bdt[i] = static_cast<T>(std::log(std::expm1(u)));
        }
        m.b_dt = ps.add(prefix + ".b_dt", std::move(bdt));
        // A[d,s] = -(s+1): a decaying ramp across the state index
        Tensor<T> al(Shape{m.d_inner, m.n_state});
        for (std::int64_t d = 0; d < m.d_inner; ++d)
            for (std::int64_t s = 0; s < m.n_state; ++s)
                al[d * m.n_state + s] = static_cast<T>(std::log(static_cast<double>(s + 1)));
        m.a_log = ps.add(prefix + ".a_log", std::move(al));
        m.d_skip = ps.add(prefix + ".d_skip", Tensor<T>(Shape{m.d_inner}, T(1)));
        m.w_out = ps.add(prefix + ".w_out", fanin_uniform<T>({d_model, m.d_inner}, m.d_inner, rng));
        return m;
    }

    // x [N, d_model, L] -> [N, d_model, L]
    Var forward(Graph<T>& g, const Binding<T>& p, Var x) const {
        Var a = g.linear_seq(x, p[w_in], Var{});
        Var xs = g.narrow(a, 1, 0, d_inner);
        Var zs = g.narrow(a, 1, d_inner, d_inner);
        Var xc = g.silu(g.conv1d_causal_dw(xs, p[w_conv], p[b_conv]));
        Var pr = g.linear_seq(xc, p[w_x], Var{});
        Var dtr = g.narrow(pr, 1, 0, dt_rank);
        Var Bm = g.narrow(pr, 1, dt_rank, n_state);
        Var Cm = g.narrow(pr, 1, dt_rank + n_state, n_state);
        Var dt = g.softplus(g.linear_seq(dtr, p[w_dt], p[b_dt]));
        Var A = g.scale(g.exp(p[a_log]), -1.0);
        Var y = g.selective_scan(xc, A, Bm, Cm, dt, p[d_skip]);
        y = g.mul(y, g.silu(zs));
        return g.linear_seq(y, p[w_out], Var{});
    }

    std::vector<int> param_indices() const {
        return {w_in, w_conv, b_conv, w_x, w_dt, b_dt, a_log, d_skip, w_out};
    }
};

// ---------------------------------------------------------------------------
// Quadratic-attention foil for the complexity benchmark.

template <typename T>
Tensor<T> attention_reference(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk,
                              const Tensor<T>& wv) {
    if (x.rank() != 2 || wq.rank() != 2) throw DimensionError("attention_reference: x [D,L], w [D,D]");
    const std::int64_t Dm = x.dim(0), L = x.dim(1);
    if (wq.shape() != Shape{Dm, Dm} || wk.shape() != wq.shape() || wv.shape() != wq.shape())
        throw DimensionError("attention_reference: weight shapes must be [D,D]");
    Tensor<T> y(x.shape());
    kern::attention_reference(x.data(), wq.data(), wk.data(), wv.data(), y.data(), Dm, L);
    return y;
}

}  // namespace wsr::ssm
