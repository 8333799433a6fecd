#pragma once

// Central finite differences over tensor parameters, and a sampling harness
// that pins analytic tape gradients against them.  Double precision is the
// intended instantiation: with step h=1e-5 the truncation and roundoff floors
// both sit well below the 1e-4 acceptance line.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wsr/graph.hpp"
#include "wsr/params.hpp"
#include "wsr/tensor.hpp"

namespace wsr {

// Full central-difference gradient of f with respect to every coordinate of
// every parameter.  f must be a pure function of the parameter values.
template <typename T, typename Fn>
std::vector<Tensor<T>> finite_diff_grad(Fn f, std::vector<Tensor<T>> params, double h) {
    std::vector<Tensor<T>> grads;
    grads.reserve(params.size());
    for (auto& p : params) grads.emplace_back(p.shape());
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::int64_t i = 0; i < params[pi].size(); ++i) {
            const T orig = params[pi][i];
            params[pi][i] = orig + static_cast<T>(h);
            const double fp = static_cast<double>(f(static_cast<const std::vector<Tensor<T>>&>(params)));
            params[pi][i] = orig - static_cast<T>(h);
            const double fm = static_cast<double>(f(static_cast<const std::vector<Tensor<T>>&>(params)));
            params[pi][i] = orig;
            grads[pi][i] = static_cast<T>((fp - fm) / (2.0 * h));
        }
    }
    return grads;
}

struct GradCheckReport {
    double max_rel_err = 0.0;
    long coords_checked = 0;
    std::string worst;
};

inline double grad_rel_err(double analytic, double numeric) {
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

// build must map (graph, leaves) to a scalar Var deterministically.  Analytic
// gradients come from one backward pass; numeric ones from re-running the
// forward with single coordinates nudged by +-h.  Coordinates are sampled
// without replacement when a tensor is larger than coords_per_leaf.
template <typename T, typename BuildFn>
GradCheckReport grad_check(BuildFn build, const std::vector<Tensor<T>>& leaf_values, Pcg32& rng,
                           std::int64_t coords_per_leaf, double h) {
    std::vector<Tensor<T>> analytic;
    {
        Graph<T> g;
        std::vector<Var> vars;
        vars.reserve(leaf_values.size());
        for (const auto& t : leaf_values) vars.push_back(g.leaf(t, true));
        Var out = build(g, vars);
        g.backward(out);
        for (Var v : vars) analytic.push_back(g.grad(v));
    }
    auto eval = [&](const std::vector<Tensor<T>>& vals) {
        Graph<T> g;
        std::vector<Var> vars;
        vars.reserve(vals.size());
        for (const auto& t : vals) vars.push_back(g.leaf(t, false));
        Var out = build(g, vars);
        return static_cast<double>(g.value(out)[0]);
    };
    std::vector<Tensor<T>> work = leaf_values;
    GradCheckReport rep;
    for (std::size_t pi = 0; pi < work.size(); ++pi) {
        const std::int64_t n = work[pi].size();
        std::vector<std::int64_t> coords;
        if (n <= coords_per_leaf) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            // partial Fisher-Yates: first coords_per_leaf entries of a shuffle
            std::vector<std::int64_t> all(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
            for (std::int64_t i = 0; i < coords_per_leaf; ++i) {
                const std::int64_t j =
                    i + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint32_t>(n - i)));
                std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
            }
            coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(coords_per_leaf));
        }
        for (std::int64_t c : coords) {
            const T orig = work[pi][c];
            work[pi][c] = orig + static_cast<T>(h);
            const double fp = eval(work);
            work[pi][c] = orig - static_cast<T>(h);
            const double fm = eval(work);
            work[pi][c] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double an = static_cast<double>(analytic[pi][c]);
            const double err = grad_rel_err(an, numeric);
            ++rep.coords_checked;
            if (err > rep.max_rel_err) {
                rep.max_rel_err = err;
                rep.worst = "leaf " + std::to_string(pi) + " coord " + std::to_string(c) + " analytic " +
                            std::to_string(an) + " numeric " + std::to_string(numeric);
            }
        }
    }
    return rep;
}

// Same idea over a parameter store: build maps (graph, bound params) to a
// scalar loss.  total_coords coordinates are sampled over the flattened
// parameter vector, so large and small tensors are weighted by size.
template <typename T, typename BuildFn>
GradCheckReport param_grad_check(ParamStore<T>& store, BuildFn build, Pcg32& rng,
                                 std::int64_t total_coords, double h) {
    std::vector<Tensor<T>> analytic;
    {
        Graph<T> g;
        Binding<T> p = bind_params(g, store, true);
        Var out = build(g, p);
        g.backward(out);
        for (Var v : p.vars) analytic.push_back(g.grad(v));
    }
    auto eval = [&]() {
        Graph<T> g;
        Binding<T> p = bind_params(g, store, false);
        Var out = build(g, p);
        return static_cast<double>(g.value(out)[0]);
    };
    const std::int64_t total = store.total_params();
    GradCheckReport rep;
    for (std::int64_t s = 0; s < total_coords; ++s) {
        std::int64_t flat = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(total)));
        std::size_t pi = 0;
        while (flat >= store.entry(pi).value.size()) {
            flat -= store.entry(pi).value.size();
            ++pi;
        }
        T& coord = store.entry(pi).value[flat];
        const T orig = coord;
        coord = orig + static_cast<T>(h);
        const double fp = eval();
        coord = orig - static_cast<T>(h);
        const double fm = eval();
        coord = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double an = static_cast<double>(analytic[pi][flat]);
        const double err = grad_rel_err(an, numeric);
        ++rep.coords_checked;
        if (err > rep.max_rel_err) {
            rep.max_rel_err = err;
            rep.worst = store.entry(pi).name + " coord " + std::to_string(flat) + " analytic " +
                        std::to_string(an) + " numeric " + std::to_string(numeric);
        }
    }
    return rep;
}

}  // namespace wsr
