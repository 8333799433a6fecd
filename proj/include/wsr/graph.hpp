#pragma once

// Reverse-mode tape over Tensor<T>.  Nodes are appended in execution order
// (already topological); backward() walks the tape in reverse and each node's
// closure accumulates into its inputs' grad buffers.  Every op validates
// shapes up front and checks its output for non-finite values immediately,
// so numerical failures surface at the op that produced them.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "wsr/kernels.hpp"
#include "wsr/tensor.hpp"

namespace wsr {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

namespace detail {

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * s[static_cast<std::size_t>(i) + 1];
    return st;
}

// out[k-th axis] = in[axes[k]]; fills dst (already sized) from src.
template <typename T>
void permute_apply(const Tensor<T>& src, Tensor<T>& dst, const std::vector<int>& axes, bool accumulate) {
    const auto& ish = src.shape();
    const auto istr = row_major_strides(ish);
    const auto& osh = dst.shape();
    const int r = src.rank();
    const std::int64_t n = src.size();
    std::vector<std::int64_t> ostr_in(static_cast<std::size_t>(r));
    // stride in the source for a unit step along each output axis
    for (int k = 0; k < r; ++k) ostr_in[static_cast<std::size_t>(k)] = istr[static_cast<std::size_t>(axes[static_cast<std::size_t>(k)])];
    const auto ostr = row_major_strides(osh);
    const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && n > 4096)
    for (std::int64_t o = 0; o < n; ++o) {
        std::int64_t acc = o, src_off = 0;
        for (int k = 0; k < r; ++k) {
            const std::int64_t coord = acc / ostr[static_cast<std::size_t>(k)];
            acc -= coord * ostr[static_cast<std::size_t>(k)];
            src_off += coord * ostr_in[static_cast<std::size_t>(k)];
        }
        if (accumulate)
            dst[o] += src[src_off];
        else
            dst[o] = src[src_off];
    }
}

}  // namespace detail

template <typename T>
class Graph {
  public:
    struct Node {
        std::string op;
        std::vector<int> inputs;
        Tensor<T> value;
        Tensor<T> grad;
        bool needs_grad = false;
        std::function<void(Graph&, Node&)> backward;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    std::size_t node_count() const { return nodes_.size(); }

    Var leaf(Tensor<T> v, bool requires_grad) {
        Node n;
        n.op = "leaf";
        n.value = std::move(v);
        n.needs_grad = requires_grad;
        n.value.check_finite("leaf");
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }
    Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

    const Tensor<T>& value(Var v) const { return node(v).value; }
    const Tensor<T>& grad(Var v) const {
        const Node& n = node(v);
        if (n.grad.empty()) throw NumericError("grad read before backward for op " + n.op);
        return n.grad;
    }

    // -- elementwise ---------------------------------------------------------

    Var add(Var a, Var b) {
        check_same(a, b, "add");
        return unary2(
            "add", a, b, [](T x, T y) { return x + y; },
            [](Graph& g, Node& n) {
                if (g.node_ref(n.inputs[0]).needs_grad) {
                    Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
                    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
                }
                if (g.node_ref(n.inputs[1]).needs_grad) {
                    Tensor<T>& gb = g.ensure_grad(n.inputs[1]);
                    for (std::int64_t i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i];
                }
            });
    }

    Var sub(Var a, Var b) {
        check_same(a, b, "sub");
        return unary2(
            "sub", a, b, [](T x, T y) { return x - y; },
            [](Graph& g, Node& n) {
                if (g.node_ref(n.inputs[0]).needs_grad) {
                    Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
                    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
                }
                if (g.node_ref(n.inputs[1]).needs_grad) {
                    Tensor<T>& gb = g.ensure_grad(n.inputs[1]);
                    for (std::int64_t i = 0; i < n.grad.size(); ++i) gb[i] -= n.grad[i];
                }
            });
    }

    Var mul(Var a, Var b) {
        check_same(a, b, "mul");
        return unary2(
            "mul", a, b, [](T x, T y) { return x * y; },
            [](Graph& g, Node& n) {
                const Tensor<T>& av = g.node_ref(n.inputs[0]).value;
                const Tensor<T>& bv = g.node_ref(n.inputs[1]).value;
                if (g.node_ref(n.inputs[0]).needs_grad) {
                    Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
                    for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * bv[i];
                }
                if (g.node_ref(n.inputs[1]).needs_grad) {
                    Tensor<T>& gb = g.ensure_grad(n.inputs[1]);
                    for (std::int64_t i = 0; i < n.grad.size(); ++i) gb[i] += n.grad[i] * av[i];
                }
            });
    }

    Var scale(Var a, double c) {
        const T cv = static_cast<T>(c);
        Tensor<T> out(node(a).value.shape());
        kern::map1(node(a).value.data(), out.data(), out.size(), [cv](T x) { return x * cv; });
        return push("scale", {a.id}, std::move(out), [cv](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * cv;
        });
    }

    Var exp(Var a) {
        Tensor<T> out(node(a).value.shape());
        kern::map1(node(a).value.data(), out.data(), out.size(), [](T x) { return std::exp(x); });
        return push("exp", {a.id}, std::move(out), [](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * n.value[i];
        });
    }

    Var relu(Var a) {
        Tensor<T> out(node(a).value.shape());
        kern::map1(node(a).value.data(), out.data(), out.size(), [](T x) { return x > T(0) ? x : T(0); });
        return push("relu", {a.id}, std::move(out), [](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            const Tensor<T>& xv = g.node_ref(n.inputs[0]).value;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += xv[i] > T(0) ? n.grad[i] : T(0);
        });
    }

    static T sigmoid_val(T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
    }

    Var sigmoid(Var a) {
        Tensor<T> out(node(a).value.shape());
        kern::map1(node(a).value.data(), out.data(), out.size(), [](T x) { return sigmoid_val(x); });
        return push("sigmoid", {a.id}, std::move(out), [](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            for (std::int64_t i = 0; i < n.grad.size(); ++i)
                ga[i] += n.grad[i] * n.value[i] * (T(1) - n.value[i]);
        });
    }

    Var silu(Var a) {
        Tensor<T> out(node(a).value.shape());
        kern::map1(node(a).value.data(), out.data(), out.size(), [](T x) { return x * sigmoid_val(x); });
        return push("silu", {a.id}, std::move(out), [](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            const Tensor<T>& xv = g.node_ref(n.inputs[0]).value;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            for (std::int64_t i = 0; i < n.grad.size(); ++i) {
                const T s = sigmoid_val(xv[i]);
                ga[i] += n.grad[i] * s * (T(1) + xv[i] * (T(1) - s));
            }
        });
    }

    // softplus(x) = log(1+exp(x)), computed in the stable branch form.
    Var softplus(Var a) {
        Tensor<T> out(node(a).value.shape());
        kern::map1(node(a).value.data(), out.data(), out.size(), [](T x) {
            return x > T(20) ? x : std::log1p(std::exp(x));
        });
        return push("softplus", {a.id}, std::move(out), [](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            const Tensor<T>& xv = g.node_ref(n.inputs[0]).value;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * sigmoid_val(xv[i]);
        });
    }

    // -- shape ops -----------------------------------------------------------

    Var reshape(Var a, Shape s) {
        Tensor<T> out = node(a).value.reshaped(std::move(s));
        return push("reshape", {a.id}, std::move(out), [](Graph& g, Node& n) {
            Node& in = g.node_ref(n.inputs[0]);
            if (!in.needs_grad) return;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            for (std::int64_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
        });
    }

    Var permute(Var a, std::vector<int> axes) {
        const Tensor<T>& x = node(a).value;
        if (static_cast<int>(axes.size()) != x.rank()) throw DimensionError("permute: axes rank mismatch");
        Shape os(axes.size());
        std::vector<bool> seen(axes.size(), false);
        for (std::size_t k = 0; k < axes.size(); ++k) {
            const int ax = axes[k];
            if (ax < 0 || ax >= x.rank() || seen[static_cast<std::size_t>(ax)])
                throw DimensionError("permute: invalid axes");
            seen[static_cast<std::size_t>(ax)] = true;
            os[k] = x.dim(ax);
        }
        Tensor<T> out(os);
        detail::permute_apply(x, out, axes, false);
        std::vector<int> inv(axes.size());
        for (std::size_t k = 0; k < axes.size(); ++k) inv[static_cast<std::size_t>(axes[k])] = static_cast<int>(k);
        return push("permute", {a.id}, std::move(out), [inv](Graph& g, Node& n) {
            Node& in = g.node_ref(n.inputs[0]);
            if (!in.needs_grad) return;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            detail::permute_apply(n.grad, ga, inv, true);
        });
    }

    Var transpose2d(Var a) { return permute(a, {1, 0}); }

    Var concat(int axis, const std::vector<Var>& parts) {
        if (parts.empty()) throw DimensionError("concat: no inputs");
        const Tensor<T>& first = node(parts[0]).value;
        const int r = first.rank();
        if (axis < 0 || axis >= r) throw DimensionError("concat: bad axis");
        Shape os = first.shape();
        std::int64_t total = 0;
        for (Var p : parts) {
            const Tensor<T>& t = node(p).value;
            if (t.rank() != r) throw DimensionError("concat: rank mismatch");
            for (int k = 0; k < r; ++k)
                if (k != axis && t.dim(k) != first.dim(k))
                    throw DimensionError("concat: extent mismatch off the concat axis");
            total += t.dim(axis);
        }
        os[static_cast<std::size_t>(axis)] = total;
        Tensor<T> out(os);
        std::int64_t outer = 1, inner = 1;
        for (int k = 0; k < axis; ++k) outer *= first.dim(k);
        for (int k = axis + 1; k < r; ++k) inner *= first.dim(k);
        std::vector<int> ids;
        std::vector<std::int64_t> lens;
        std::int64_t off = 0;
        for (Var p : parts) {
            const Tensor<T>& t = node(p).value;
            const std::int64_t la = t.dim(axis);
            for (std::int64_t o = 0; o < outer; ++o)
                std::memcpy(out.data() + (o * total + off) * inner, t.data() + o * la * inner,
                            static_cast<std::size_t>(la * inner) * sizeof(T));
            ids.push_back(p.id);
            lens.push_back(la);
            off += la;
        }
        return push("concat", ids, std::move(out), [outer, inner, total, lens](Graph& g, Node& n) {
            std::int64_t o2 = 0;
            for (std::size_t pi = 0; pi < n.inputs.size(); ++pi) {
                const std::int64_t la = lens[pi];
                Node& in = g.node_ref(n.inputs[static_cast<int>(pi)]);
                if (in.needs_grad) {
                    Tensor<T>& ga = g.ensure_grad(n.inputs[static_cast<int>(pi)]);
                    for (std::int64_t o = 0; o < outer; ++o) {
                        const T* src = n.grad.data() + (o * total + o2) * inner;
                        T* dst = ga.data() + o * la * inner;
                        for (std::int64_t i = 0; i < la * inner; ++i) dst[i] += src[i];
                    }
                }
                o2 += la;
            }
        });
    }

    Var narrow(Var a, int axis, std::int64_t start, std::int64_t len) {
        const Tensor<T>& x = node(a).value;
        const int r = x.rank();
        if (axis < 0 || axis >= r) throw DimensionError("narrow: bad axis");
        if (start < 0 || len <= 0 || start + len > x.dim(axis)) throw DimensionError("narrow: bad range");
        Shape os = x.shape();
        os[static_cast<std::size_t>(axis)] = len;
        std::int64_t outer = 1, inner = 1;
        for (int k = 0; k < axis; ++k) outer *= x.dim(k);
        for (int k = axis + 1; k < r; ++k) inner *= x.dim(k);
        const std::int64_t la = x.dim(axis);
        Tensor<T> out(os);
        for (std::int64_t o = 0; o < outer; ++o)
            std::memcpy(out.data() + o * len * inner, x.data() + (o * la + start) * inner,
                        static_cast<std::size_t>(len * inner) * sizeof(T));
        return push("narrow", {a.id}, std::move(out), [outer, inner, la, start, len](Graph& g, Node& n) {
            Node& in = g.node_ref(n.inputs[0]);
            if (!in.needs_grad) return;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            for (std::int64_t o = 0; o < outer; ++o) {
                const T* src = n.grad.data() + o * len * inner;
                T* dst = ga.data() + (o * la + start) * inner;
                for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        });
    }

    // Permutation of the last axis: out[...,t] = x[...,order[t]].
    Var gather_last(Var a, std::shared_ptr<const std::vector<std::int64_t>> order) {
        const Tensor<T>& x = node(a).value;
        const std::int64_t L = x.dim(x.rank() - 1);
        if (static_cast<std::int64_t>(order->size()) != L)
            throw DimensionError("gather_last: order length must match the last axis");
        const std::int64_t outer = x.size() / L;
        Tensor<T> out(x.shape());
        const auto& idx = *order;
        const int nt = thread_count();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && outer > 1)
        for (std::int64_t o = 0; o < outer; ++o) {
            const T* src = x.data() + o * L;
            T* dst = out.data() + o * L;
            for (std::int64_t t = 0; t < L; ++t) dst[t] = src[idx[static_cast<std::size_t>(t)]];
        }
        return push("gather_last", {a.id}, std::move(out), [order, outer, L](Graph& g, Node& n) {
            Node& in = g.node_ref(n.inputs[0]);
            if (!in.needs_grad) return;
            Tensor<T>& ga = g.ensure_grad(n.inputs[0]);
            const auto& idx = *order;
            for (std::int64_t o = 0; o < outer; ++o) {
                const T* src = n.grad.data() + o * L;
                T* dst = ga.data() + o * L;
                for (std::int64_t t = 0; t < L; ++t) dst[idx[static_cast<std::size_t>(t)]] += src[t];
            }
        });
    }

    // -- contractions --------------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor<T>& av = node(a).value;
        const Tensor<T>& bv = node(b).value;
        if (av.rank() != bv.rank() || (av.rank() != 2 && av.rank() != 3))
            throw DimensionError("matmul: expects two rank-2 or two rank-3 tensors");
        const bool batched = av.rank() == 3;
        const std::int64_t B = batched ? av.dim(0) : 1;
        const std::int64_t M = av.dim(batched ? 1 : 0), K = av.dim(batched ? 2 : 1);
        const std::int64_t K2 = bv.dim(batched ? 1 : 0), Nn = bv.dim(batched ? 2 : 1);
        if (K != K2 || (batched && bv.dim(0) != B))
            throw DimensionError("matmul: inner extents differ: " + shape_str(av.shape()) + " x " +
                                 shape_str(bv.shape()));
        Shape os = batched ? Shape{B, M, Nn} : Shape{M, Nn};
        Tensor<T> out(os);
        kern::matmul_fwd(av.data(), bv.data(), out.data(), B, M, K, Nn);
        return push("matmul", {a.id, b.id}, std::move(out), [B, M, K, Nn](Graph& g, Node& n) {
            Node& na = g.node_ref(n.inputs[0]);
            Node& nb = g.node_ref(n.inputs[1]);
            if (na.needs_grad)
                kern::matmul_bwd_a(g.ensure_grad(n.inputs[0]).data(), n.grad.data(), nb.value.data(), B, M,
                                   K, Nn);
            if (nb.needs_grad)
                kern::matmul_bwd_b(g.ensure_grad(n.inputs[1]).data(), n.grad.data(), na.value.data(), B, M,
                                   K, Nn);
        });
    }

    Var softmax(Var a, int axis) {
        const Tensor<T>& x = node(a).value;
        if (axis < 0 || axis >= x.rank()) throw DimensionError("softmax: bad axis");
        std::int64_t outer = 1, inner = 1;
        for (int k = 0; k < axis; ++k) outer *= x.dim(k);
        for (int k = axis + 1; k < x.rank(); ++k) inner *= x.dim(k);
        const std::int64_t len = x.dim(axis);
        Tensor<T> out(x.shape());
        kern::softmax_fwd(x.data(), out.data(), outer, len, inner);
        return push("softmax", {a.id}, std::move(out), [outer, len, inner](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            kern::softmax_bwd(g.ensure_grad(n.inputs[0]).data(), n.grad.data(), n.value.data(), outer, len,
                              inner);
        });
    }

    // -- structured ops ------------------------------------------------------

    Var conv2d(Var x, Var w, Var b, std::int64_t stride, std::int64_t pad, std::int64_t groups = 1) {
        const Tensor<T>& xv = node(x).value;
        const Tensor<T>& wv = node(w).value;
        if (xv.rank() != 4 || wv.rank() != 4) throw DimensionError("conv2d: x and w must be rank 4");
        const std::int64_t N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const std::int64_t Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        if (groups < 1 || Cin % groups != 0 || Cout % groups != 0)
            throw DimensionError("conv2d: channel counts must divide the group count");
        if (wv.dim(1) != Cin / groups)
            throw DimensionError("conv2d: weight expects " + std::to_string(wv.dim(1)) +
                                 " input channels per group, input has " + std::to_string(Cin / groups));
        if (b.valid() && (node(b).value.rank() != 1 || node(b).value.dim(0) != Cout))
            throw DimensionError("conv2d: bias must be [Cout]");
        const std::int64_t Ho = kern::conv_out_extent(H, kh, stride, pad, "conv2d");
        const std::int64_t Wo = kern::conv_out_extent(W, kw, stride, pad, "conv2d");
        Tensor<T> out(Shape{N, Cout, Ho, Wo});
        kern::conv2d_fwd(xv.data(), wv.data(), b.valid() ? node(b).value.data() : nullptr, out.data(), N,
                         Cin, H, W, Cout, kh, kw, stride, pad, groups, Ho, Wo);
        std::vector<int> ins = {x.id, w.id};
        if (b.valid()) ins.push_back(b.id);
        return push("conv2d", ins, std::move(out),
                    [N, Cin, H, W, Cout, kh, kw, stride, pad, groups, Ho, Wo](Graph& g, Node& n) {
                        Node& nx = g.node_ref(n.inputs[0]);
                        Node& nw = g.node_ref(n.inputs[1]);
                        if (nx.needs_grad)
                            kern::conv2d_bwd_input(g.ensure_grad(n.inputs[0]).data(), n.grad.data(),
                                                   nw.value.data(), N, Cin, H, W, Cout, kh, kw, stride, pad,
                                                   groups, Ho, Wo);
                        if (nw.needs_grad)
                            kern::conv2d_bwd_weight(g.ensure_grad(n.inputs[1]).data(), n.grad.data(),
                                                    nx.value.data(), N, Cin, H, W, Cout, kh, kw, stride, pad,
                                                    groups, Ho, Wo);
                        if (n.inputs.size() > 2 && g.node_ref(n.inputs[2]).needs_grad)
                            kern::conv2d_bwd_bias(g.ensure_grad(n.inputs[2]).data(), n.grad.data(), N, Cout,
                                                  Ho, Wo);
                    });
    }

    Var conv1d_causal_dw(Var x, Var w, Var b) {
        const Tensor<T>& xv = node(x).value;
        const Tensor<T>& wv = node(w).value;
        if (xv.rank() != 3 || wv.rank() != 2 || xv.dim(1) != wv.dim(0))
            throw DimensionError("conv1d_causal_dw: x [N,D,L], w [D,K] expected");
        const std::int64_t N = xv.dim(0), D = xv.dim(1), L = xv.dim(2), K = wv.dim(1);
        Tensor<T> out(xv.shape());
        kern::conv1d_dw_fwd(xv.data(), wv.data(), b.valid() ? node(b).value.data() : nullptr, out.data(), N,
                            D, L, K);
        std::vector<int> ins = {x.id, w.id};
        if (b.valid()) ins.push_back(b.id);
        return push("conv1d_causal_dw", ins, std::move(out), [N, D, L, K](Graph& g, Node& n) {
            Node& nx = g.node_ref(n.inputs[0]);
            Node& nw = g.node_ref(n.inputs[1]);
            const bool want_b = n.inputs.size() > 2 && g.node_ref(n.inputs[2]).needs_grad;
            Tensor<T> tmpx;
            T* gx;
            if (nx.needs_grad) {
                gx = g.ensure_grad(n.inputs[0]).data();
            } else {
                tmpx = Tensor<T>(nx.value.shape());
                gx = tmpx.data();
            }
            T* gw = nw.needs_grad ? g.ensure_grad(n.inputs[1]).data() : nullptr;
            T* gb = want_b ? g.ensure_grad(n.inputs[2]).data() : nullptr;
            kern::conv1d_dw_bwd(gx, gw, gb, n.grad.data(), nx.value.data(), nw.value.data(), N, D, L, K);
        });
    }

    Var linear_seq(Var x, Var w, Var b) {
        const Tensor<T>& xv = node(x).value;
        const Tensor<T>& wv = node(w).value;
        if (xv.rank() != 3 || wv.rank() != 2 || wv.dim(1) != xv.dim(1))
            throw DimensionError("linear_seq: x [N,Cin,L], w [Cout,Cin] expected, got " +
                                 shape_str(xv.shape()) + " and " + shape_str(wv.shape()));
        const std::int64_t N = xv.dim(0), Cin = xv.dim(1), L = xv.dim(2), Cout = wv.dim(0);
        Tensor<T> out(Shape{N, Cout, L});
        kern::linear_seq_fwd(xv.data(), wv.data(), b.valid() ? node(b).value.data() : nullptr, out.data(),
                             N, Cin, Cout, L);
        std::vector<int> ins = {x.id, w.id};
        if (b.valid()) ins.push_back(b.id);
        return push("linear_seq", ins, std::move(out), [N, Cin, L, Cout](Graph& g, Node& n) {
            Node& nx = g.node_ref(n.inputs[0]);
            Node& nw = g.node_ref(n.inputs[1]);
            const bool want_b = n.inputs.size() > 2 && g.node_ref(n.inputs[2]).needs_grad;
            kern::linear_seq_bwd(nx.needs_grad ? g.ensure_grad(n.inputs[0]).data() : nullptr,
                                 nw.needs_grad ? g.ensure_grad(n.inputs[1]).data() : nullptr,
                                 want_b ? g.ensure_grad(n.inputs[2]).data() : nullptr, n.grad.data(),
                                 nx.value.data(), nw.value.data(), N, Cin, Cout, L);
        });
    }

    // Band-stacked single-level Haar pair.  Gradients flow through the
    // transpose, which equals the inverse because the transform is orthogonal.
    Var dwt2(Var x) {
        const Tensor<T>& xv = node(x).value;
        if (xv.rank() != 4) throw DimensionError("dwt2: rank-4 input expected");
        const std::int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        if (H % 2 != 0 || W % 2 != 0)
            throw DimensionError("dwt2: spatial extents must be even, got " + shape_str(xv.shape()));
        Tensor<T> out(Shape{N, 4 * C, H / 2, W / 2});
        kern::haar2_fwd(xv.data(), out.data(), N, C, H, W, false);
        return push("dwt2", {x.id}, std::move(out), [N, C, H, W](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            kern::haar2_inv(n.grad.data(), g.ensure_grad(n.inputs[0]).data(), N, C, H / 2, W / 2, true);
        });
    }

    Var iwt2(Var y) {
        const Tensor<T>& yv = node(y).value;
        if (yv.rank() != 4 || yv.dim(1) % 4 != 0)
            throw DimensionError("iwt2: rank-4 input with channels divisible by 4 expected");
        const std::int64_t N = yv.dim(0), C = yv.dim(1) / 4, Hh = yv.dim(2), Wh = yv.dim(3);
        Tensor<T> out(Shape{N, C, 2 * Hh, 2 * Wh});
        kern::haar2_inv(yv.data(), out.data(), N, C, Hh, Wh, false);
        return push("iwt2", {y.id}, std::move(out), [N, C, Hh, Wh](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            kern::haar2_fwd(n.grad.data(), g.ensure_grad(n.inputs[0]).data(), N, C, 2 * Hh, 2 * Wh, true);
        });
    }

    Var avgpool2(Var x) {
        const Tensor<T>& xv = node(x).value;
        if (xv.rank() != 4 || xv.dim(2) % 2 != 0 || xv.dim(3) % 2 != 0)
            throw DimensionError("avgpool2: even spatial extents expected");
        const std::int64_t NC = xv.dim(0) * xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        Tensor<T> out(Shape{xv.dim(0), xv.dim(1), H / 2, W / 2});
        kern::avgpool2_fwd(xv.data(), out.data(), NC, H, W);
        return push("avgpool2", {x.id}, std::move(out), [NC, H, W](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            kern::avgpool2_bwd(g.ensure_grad(n.inputs[0]).data(), n.grad.data(), NC, H, W);
        });
    }

    Var upsample2(Var x) {
        const Tensor<T>& xv = node(x).value;
        if (xv.rank() != 4) throw DimensionError("upsample2: rank-4 input expected");
        const std::int64_t NC = xv.dim(0) * xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        Tensor<T> out(Shape{xv.dim(0), xv.dim(1), H * 2, W * 2});
        kern::upsample2_fwd(xv.data(), out.data(), NC, H, W);
        return push("upsample2", {x.id}, std::move(out), [NC, H, W](Graph& g, Node& n) {
            if (!g.node_ref(n.inputs[0]).needs_grad) return;
            kern::upsample2_bwd(g.ensure_grad(n.inputs[0]).data(), n.grad.data(), NC, H, W);
        });
    }

    Var selective_scan(Var x, Var A, Var B, Var C, Var delta, Var Dskip) {
        const Tensor<T>& xv = node(x).value;
        const Tensor<T>& Av = node(A).value;
        const Tensor<T>& Bv = node(B).value;
        const Tensor<T>& Cv = node(C).value;
        const Tensor<T>& dv = node(delta).value;
        const Tensor<T>& Dv = node(Dskip).value;
        if (xv.rank() != 3) throw DimensionError("selective_scan: x must be [N,D,L]");
        const std::int64_t N = xv.dim(0), D = xv.dim(1), L = xv.dim(2);
        if (Av.rank() != 2 || Av.dim(0) != D) throw DimensionError("selective_scan: A must be [D,S]");
        const std::int64_t S = Av.dim(1);
        auto want = [&](const Tensor<T>& t, Shape s, const char* nm) {
            if (t.shape() != s)
                throw DimensionError(std::string("selective_scan: ") + nm + " expected " + shape_str(s) +
                                     ", got " + shape_str(t.shape()));
        };
        want(Bv, Shape{N, S, L}, "B");
        want(Cv, Shape{N, S, L}, "C");
        want(dv, Shape{N, D, L}, "delta");
        want(Dv, Shape{D}, "Dskip");
        const bool grad = node(x).needs_grad || node(A).needs_grad || node(B).needs_grad ||
                          node(C).needs_grad || node(delta).needs_grad || node(Dskip).needs_grad;
        auto cache_abar = std::make_shared<Tensor<T>>();
        auto cache_h = std::make_shared<Tensor<T>>();
        if (grad) {
            *cache_abar = Tensor<T>(Shape{N, D, L, S});
            *cache_h = Tensor<T>(Shape{N, D, L, S});
        }
        Tensor<T> out(xv.shape());
        kern::scan_fwd(xv.data(), Av.data(), Bv.data(), Cv.data(), dv.data(), Dv.data(), out.data(), N, D,
                       L, S, grad ? cache_abar->data() : nullptr, grad ? cache_h->data() : nullptr);
        return push("selective_scan", {x.id, A.id, B.id, C.id, delta.id, Dskip.id}, std::move(out),
                    [N, D, L, S, cache_abar, cache_h](Graph& g, Node& n) {
                        auto grad_or_temp = [&](int slot, Tensor<T>& tmp) -> T* {
                            if (g.node_ref(n.inputs[slot]).needs_grad)
                                return g.ensure_grad(n.inputs[slot]).data();
                            tmp = Tensor<T>(g.node_ref(n.inputs[slot]).value.shape());
                            return tmp.data();
                        };
                        Tensor<T> t0, t1, t2, t3, t4, t5;
                        T* gx = grad_or_temp(0, t0);
                        T* gA = grad_or_temp(1, t1);
                        T* gB = grad_or_temp(2, t2);
                        T* gC = grad_or_temp(3, t3);
                        T* gd = grad_or_temp(4, t4);
                        T* gD = grad_or_temp(5, t5);
                        kern::scan_bwd(n.grad.data(), g.node_ref(n.inputs[0]).value.data(),
                                       g.node_ref(n.inputs[1]).value.data(),
                                       g.node_ref(n.inputs[2]).value.data(),
                                       g.node_ref(n.inputs[3]).value.data(),
                                       g.node_ref(n.inputs[4]).value.data(),
                                       g.node_ref(n.inputs[5]).value.data(), cache_abar->data(),
                                       cache_h->data(), gx, gA, gB, gC, gd, gD, N, D, L, S);
                    });
    }

    // -- reductions and losses -----------------------------------------------

    Var mean_all(Var a) {
        const Tensor<T>& x = node(a).value;
        T acc = T(0);
        for (std::int64_t i = 0; i < x.size(); ++i) acc += x[i];
        const std::int64_t n = x.size();
        Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
        return push("mean_all", {a.id}, std::move(out), [n](Graph& g, Node& nd) {
            if (!g.node_ref(nd.inputs[0]).needs_grad) return;
            Tensor<T>& ga = g.ensure_grad(nd.inputs[0]);
            const T q = nd.grad[0] / static_cast<T>(n);
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += q;
        });
    }

    Var sum_all(Var a) {
        const Tensor<T>& x = node(a).value;
        T acc = T(0);
        for (std::int64_t i = 0; i < x.size(); ++i) acc += x[i];
        Tensor<T> out = Tensor<T>::scalar(acc);
        return push("sum_all", {a.id}, std::move(out), [](Graph& g, Node& nd) {
            if (!g.node_ref(nd.inputs[0]).needs_grad) return;
            Tensor<T>& ga = g.ensure_grad(nd.inputs[0]);
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += nd.grad[0];
        });
    }

    // Mean elementwise smooth L1 (quadratic inside the unit band, linear
    // outside; the two branches meet with matching value and slope at |e|=1).
    Var smooth_l1(Var pred, Var target) {
        check_same(pred, target, "smooth_l1");
        const Tensor<T>& p = node(pred).value;
        const Tensor<T>& t = node(target).value;
        T acc = T(0);
        for (std::int64_t i = 0; i < p.size(); ++i) {
            const T e = p[i] - t[i];
            const T ae = std::abs(e);
            acc += ae < T(1) ? T(0.5) * e * e : ae - T(0.5);
        }
        const std::int64_t n = p.size();
        Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
        return push("smooth_l1", {pred.id, target.id}, std::move(out), [n](Graph& g, Node& nd) {
            const Tensor<T>& pv = g.node_ref(nd.inputs[0]).value;
            const Tensor<T>& tv = g.node_ref(nd.inputs[1]).value;
            const T q = nd.grad[0] / static_cast<T>(n);
            const bool wp = g.node_ref(nd.inputs[0]).needs_grad;
            const bool wt = g.node_ref(nd.inputs[1]).needs_grad;
            if (!wp && !wt) return;
            Tensor<T>* gp = wp ? &g.ensure_grad(nd.inputs[0]) : nullptr;
            Tensor<T>* gt = wt ? &g.ensure_grad(nd.inputs[1]) : nullptr;
            for (std::int64_t i = 0; i < pv.size(); ++i) {
                const T e = pv[i] - tv[i];
                const T d = std::abs(e) < T(1) ? e : (e > T(0) ? T(1) : T(-1));
                if (gp) (*gp)[i] += q * d;
                if (gt) (*gt)[i] -= q * d;
            }
        });
    }

    Var mse(Var a, Var b) {
        check_same(a, b, "mse");
        const Tensor<T>& av = node(a).value;
        const Tensor<T>& bv = node(b).value;
        T acc = T(0);
        for (std::int64_t i = 0; i < av.size(); ++i) {
            const T e = av[i] - bv[i];
            acc += e * e;
        }
        const std::int64_t n = av.size();
        Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
        return push("mse", {a.id, b.id}, std::move(out), [n](Graph& g, Node& nd) {
            const Tensor<T>& av2 = g.node_ref(nd.inputs[0]).value;
            const Tensor<T>& bv2 = g.node_ref(nd.inputs[1]).value;
            const T q = T(2) * nd.grad[0] / static_cast<T>(n);
            const bool wa = g.node_ref(nd.inputs[0]).needs_grad;
            const bool wb = g.node_ref(nd.inputs[1]).needs_grad;
            if (!wa && !wb) return;
            Tensor<T>* ga = wa ? &g.ensure_grad(nd.inputs[0]) : nullptr;
            Tensor<T>* gb = wb ? &g.ensure_grad(nd.inputs[1]) : nullptr;
            for (std::int64_t i = 0; i < av2.size(); ++i) {
                const T e = av2[i] - bv2[i];
                if (ga) (*ga)[i] += q * e;
                if (gb) (*gb)[i] -= q * e;
            }
        });
    }

    // -- engine ---------------------------------------------------------------

    void backward(Var loss) {
        Node& ln = node_ref(loss.id);
        if (ln.value.size() != 1) throw DimensionError("backward: loss must be a scalar");
        if (!ln.needs_grad) throw NumericError("backward: loss does not depend on any parameter");
        for (Node& n : nodes_)
            if (n.needs_grad && !n.grad.empty()) std::fill(n.grad.vec().begin(), n.grad.vec().end(), T(0));
        ensure_grad(loss.id)[0] = T(1);
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.needs_grad || !n.backward || n.grad.empty()) continue;
            n.backward(*this, n);
        }
    }

    Tensor<T>& ensure_grad(int id) {
        Node& n = node_ref(id);
        if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }

  private:
    std::vector<Node> nodes_;

    const Node& node(Var v) const { return node_ref(v.id); }
    const Node& node(int id) const { return node_ref(id); }

    Node& node_ref(int id) {
        if (id < 0 || id >= static_cast<int>(nodes_.size())) throw DimensionError("invalid tape id");
        return nodes_[static_cast<std::size_t>(id)];
    }
    const Node& node_ref(int id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size())) throw DimensionError("invalid tape id");
        return nodes_[static_cast<std::size_t>(id)];
    }

    void check_same(Var a, Var b, const char* what) const {
        if (!node(a).value.same_shape(node(b).value))
            throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(node(a).value.shape()) +
                                 " vs " + shape_str(node(b).value.shape()));
    }

    Var push(std::string op, std::vector<int> inputs, Tensor<T> value,
             std::function<void(Graph&, Node&)> bwd) {
        Node n;
        n.op = std::move(op);
        n.inputs = std::move(inputs);
        n.needs_grad = false;
        for (int i : n.inputs)
            if (node_ref(i).needs_grad) n.needs_grad = true;
        n.value = std::move(value);
        n.value.check_finite(n.op.c_str());
        if (n.needs_grad) n.backward = std::move(bwd);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    template <typename F, typename BW>
    Var unary2(const char* op, Var a, Var b, F f, BW bwd) {
        Tensor<T> out(node(a).value.shape());
        kern::map2(node(a).value.data(), node(b).value.data(), out.data(), out.size(), f);
        return push(op, {a.id, b.id}, std::move(out), bwd);
    }
};

}  // namespace wsr
