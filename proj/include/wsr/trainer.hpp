#pragma once

// Training loop: Adam with bias correction, a piecewise-constant learning
// rate schedule, optional global-norm gradient clipping, and a bounded
// hand-off queue for batch prefetch.  Batch composition is a pure function
// of (seed, step index), so prefetching on another thread cannot change
// results and single-threaded runs are bit-reproducible.

#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>
#include <utility>
#include <vector>

#include "wsr/datasynth.hpp"
#include "wsr/loss.hpp"
#include "wsr/model.hpp"

namespace wsr {

// Single-producer single-consumer queue.  push blocks while full, pop blocks
// while empty, items come out in push order.  close() wakes a blocked pop.
template <typename T>
class BoundedQueue {
  public:
    explicit BoundedQueue(std::size_t capacity) : cap_(capacity) {
        if (capacity == 0) throw ConfigError("BoundedQueue: capacity must be >= 1");
    }

    bool push(T item) {
        std::unique_lock<std::mutex> lk(mu_);
        not_full_.wait(lk, [&] { return items_.size() < cap_ || closed_; });
        if (closed_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock<std::mutex> lk(mu_);
        not_empty_.wait(lk, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard<std::mutex> lk(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

  private:
    std::size_t cap_;
    std::deque<T> items_;
    bool closed_ = false;
    std::mutex mu_;
    std::condition_variable not_full_, not_empty_;
};

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t t = 0;
    std::vector<Tensor<float>> m, v;

    static AdamState init(const ParamStore<float>& store) {
        AdamState s;
        for (const auto& e : store.entries()) {
            s.m.push_back(Tensor<float>::zeros(e.value.shape()));
            s.v.push_back(Tensor<float>::zeros(e.value.shape()));
        }
        return s;
    }
};

// Scales all gradients by min(1, max_norm / ||g||_2).  Never increases the norm.
inline double clip_grad_norm(std::vector<Tensor<float>>& grads, double max_norm) {
    double sq = 0;
    for (const auto& g : grads)
        for (std::int64_t i = 0; i < g.size(); ++i) sq += double(g[i]) * double(g[i]);
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& g : grads)
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] = float(double(g[i]) * s);
    }
    return norm;
}

// One optimizer step over every parameter in store order.
inline void adam_step(AdamState& st, ParamStore<float>& store,
                      const std::vector<Tensor<float>>& grads, double lr) {
    if (grads.size() != store.count()) throw DimensionError("adam_step: gradient count mismatch");
    st.t += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, double(st.t));
    for (std::size_t k = 0; k < store.count(); ++k) {
        auto& p = store.entry(k).value;
        const auto& g = grads[k];
        if (!p.same_shape(g)) throw DimensionError("adam_step: gradient shape mismatch at " +
                                                   store.entry(k).name);
        auto& m = st.m[k];
        auto& v = st.v[k];
        for (std::int64_t i = 0; i < p.size(); ++i) {
            const double gi = double(g[i]);
            m[i] = float(st.beta1 * double(m[i]) + (1 - st.beta1) * gi);
            v[i] = float(st.beta2 * double(v[i]) + (1 - st.beta2) * gi * gi);
            const double mhat = double(m[i]) / bc1;
            const double vhat = double(v[i]) / bc2;
            p[i] = float(double(p[i]) - lr * mhat / (std::sqrt(vhat) + st.eps));
        }
    }
}

struct TrainOptions {
    // (steps, learning rate) segments, run in order.
    std::vector<std::pair<std::int64_t, double>> schedule{{1500, 3e-4}, {500, 1e-4}};
    std::int64_t batch = 2;
    std::uint64_t seed = 0;
    std::int64_t crop = 0;       // 0 means full frames; otherwise a crop edge, multiple of 8
    double clip_norm = 0;        // 0 disables clipping
    std::int64_t log_every = 0;  // 0 silences progress lines
    bool prefetch = true;

    void validate() const {
        if (schedule.empty()) throw ConfigError("train: schedule must have at least one segment");
        for (const auto& [n, lr] : schedule) {
            if (n < 1) throw ConfigError("train: segment step count must be >= 1");
            if (lr < 0) throw ConfigError("train: learning rate must be >= 0");
        }
        if (batch < 1) throw ConfigError("train: batch must be >= 1");
        if (crop < 0 || crop % 8 != 0) throw ConfigError("train: crop must be 0 or a multiple of 8");
        if (clip_norm < 0) throw ConfigError("train: clip_norm must be >= 0");
    }

    std::int64_t total_steps() const {
        std::int64_t n = 0;
        for (const auto& seg : schedule) n += seg.first;
        return n;
    }

    double lr_at(std::int64_t step) const {  // step is 1-based
        std::int64_t upto = 0;
        for (const auto& [n, lr] : schedule) {
            upto += n;
            if (step <= upto) return lr;
        }
        return schedule.back().second;
    }
};

struct TrainResult {
    std::vector<double> loss_history;  // loss at step i+1
};

namespace detail {

struct Batch {
    std::int64_t step;
    Tensor<float> degraded, clean;
};

// Deterministic batch assembly from (seed, step) only.
inline Batch make_batch(const std::vector<synth::DatasetPair>& pairs, const TrainOptions& opt,
                        std::int64_t step) {
    Pcg32 rng(mix_seed(opt.seed, std::uint64_t(step)), 41);
    const std::int64_t H = pairs[0].clean.dim(2), W = pairs[0].clean.dim(3);
    const std::int64_t ch = opt.crop > 0 ? std::min(opt.crop, H) : H;
    const std::int64_t cw = opt.crop > 0 ? std::min(opt.crop, W) : W;
    Batch b;
    b.step = step;
    b.degraded = Tensor<float>(Shape{opt.batch, 3, ch, cw});
    b.clean = Tensor<float>(Shape{opt.batch, 3, ch, cw});
    for (std::int64_t k = 0; k < opt.batch; ++k) {
        const auto& p = pairs[rng.next_below(std::uint64_t(pairs.size()))];
        const std::int64_t i0 = H > ch ? std::int64_t(rng.next_below(std::uint64_t(H - ch + 1))) : 0;
        const std::int64_t j0 = W > cw ? std::int64_t(rng.next_below(std::uint64_t(W - cw + 1))) : 0;
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t i = 0; i < ch; ++i)
                for (std::int64_t j = 0; j < cw; ++j) {
                    const std::int64_t src = (c * H + i0 + i) * W + j0 + j;
                    const std::int64_t dst = ((k * 3 + c) * ch + i) * cw + j;
                    b.degraded[dst] = p.degraded[src];
                    b.clean[dst] = p.clean[src];
                }
    }
    return b;
}

}  // namespace detail

// Runs the schedule over the pairs.  Every recorded loss is finite; a
// non-finite value anywhere in the step aborts with the 1-based step index.
inline TrainResult train(Model<float>& model, const std::vector<synth::DatasetPair>& pairs,
                         const TrainOptions& opt, const FeatureFn<float>& features,
                         std::ostream* log = nullptr) {
    opt.validate();
    if (pairs.empty()) throw ConfigError("train: no training pairs");
    for (const auto& p : pairs) {
        Model<float>::check_input(p.clean.shape());
        if (!p.clean.same_shape(pairs[0].clean))
            throw DimensionError("train: all pairs must share one image size");
    }

    AdamState adam = AdamState::init(model.store);
    TrainResult res;
    const std::int64_t total = opt.total_steps();
    res.loss_history.reserve(total);

    BoundedQueue<detail::Batch> queue(4);
    std::thread producer;
    if (opt.prefetch) {
        producer = std::thread([&] {
            for (std::int64_t s = 1; s <= total; ++s)
                if (!queue.push(detail::make_batch(pairs, opt, s))) return;
        });
    }

    auto next_batch = [&](std::int64_t step) -> detail::Batch {
        if (!opt.prefetch) return detail::make_batch(pairs, opt, step);
        auto b = queue.pop();
        if (!b) throw NumericError("train: batch queue closed early");
        return std::move(*b);
    };

    try {
        for (std::int64_t step = 1; step <= total; ++step) {
            detail::Batch batch = next_batch(step);
            double loss_val;
            std::vector<Tensor<float>> grads;
            try {
                Graph<float> g;
                Binding<float> p = bind_params(g, model.store, true);
                Var pred = model.forward(g, p, g.leaf(batch.degraded, false));
                Var loss = total_loss(g, pred, g.leaf(batch.clean, false), features,
                                      model.cfg.lambda_perceptual);
                g.backward(loss);
                loss_val = double(g.value(loss)[0]);
                grads.reserve(model.store.count());
                for (std::size_t k = 0; k < model.store.count(); ++k)
                    grads.push_back(g.grad(p.vars[k]));
            } catch (const NumericError& e) {
                throw NumericError("train: aborted at step " + std::to_string(step) + ": " +
                                   e.what());
            }
            if (!std::isfinite(loss_val))
                throw NumericError("train: non-finite loss at step " + std::to_string(step));
            if (opt.clip_norm > 0) clip_grad_norm(grads, opt.clip_norm);
            adam_step(adam, model.store, grads, opt.lr_at(step));
            model.train_steps += 1;
            res.loss_history.push_back(loss_val);
            if (log && opt.log_every > 0 && (step % opt.log_every == 0 || step == total))
                (*log) << "step=" << step << " lr=" << opt.lr_at(step) << " loss=" << loss_val
                       << "\n";
        }
    } catch (...) {
        queue.close();
        if (producer.joinable()) producer.join();
        throw;
    }
    queue.close();
    if (producer.joinable()) producer.join();
    return res;
}

struct EvalRow {
    std::int64_t index;
    double psnr_in, psnr_out, ssim_in, ssim_out;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    double mean_psnr_in = 0, mean_psnr_out = 0;
    double mean_ssim_in = 0, mean_ssim_out = 0;
    double mean_psnr_gain = 0;
};

// Restores every pair and scores it against the clean reference; the
// degraded input is scored too as the no-op baseline.  Identical images
// report PSNR as +infinity.
inline EvalResult evaluate(const Model<float>& model, const std::vector<synth::DatasetPair>& pairs) {
    if (pairs.empty()) throw ConfigError("evaluate: no pairs");
    EvalResult r;
    for (const auto& p : pairs) {
        Tensor<float> restored = model.restore(p.degraded);
        EvalRow row;
        row.index = p.index;
        row.psnr_in = psnr(p.degraded, p.clean);
        row.psnr_out = psnr(restored, p.clean);
        row.ssim_in = ssim(p.degraded, p.clean);
        row.ssim_out = ssim(restored, p.clean);
        r.mean_psnr_in += row.psnr_in;
        r.mean_psnr_out += row.psnr_out;
        r.mean_ssim_in += row.ssim_in;
        r.mean_ssim_out += row.ssim_out;
        r.mean_psnr_gain += row.psnr_out - row.psnr_in;
        r.rows.push_back(row);
    }
    const double n = double(r.rows.size());
    r.mean_psnr_in /= n;
    r.mean_psnr_out /= n;
    r.mean_ssim_in /= n;
    r.mean_ssim_out /= n;
    r.mean_psnr_gain /= n;
    return r;
}

}  // namespace wsr
