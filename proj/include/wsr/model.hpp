#pragma once

// Full restorer: wavelet split -> band-grouped stem conv -> shared
// high-frequency prior enhancement -> stages of fusion blocks with additive
// stage skips -> band-grouped projection conv -> inverse wavelet, wrapped in
// a global residual so the network learns a correction to its input.

#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "wsr/blocks.hpp"
#include "wsr/graph.hpp"
#include "wsr/params.hpp"

namespace wsr {

struct ModelConfig {
    std::vector<int> depths{6, 6, 4, 4};  // fusion blocks per stage
    std::int64_t channels = 180;
    int levels = 1;
    double lambda_perceptual = 0.01;
    std::uint64_t seed = 0;
    std::string precision = "f32";  // f32 | f64
    std::int64_t hfem_width = 16;
    std::int64_t n_state = 16;
    std::int64_t expand = 2;
    std::int64_t conv_kernel = 4;
    bool hfem_identity_skip = true;

    static ModelConfig toy() {
        ModelConfig c;
        c.depths = {1, 1};
        c.channels = 8;
        return c;
    }

    void validate() const {
        if (depths.empty()) throw ConfigError("model config: depths must be non-empty");
        for (int d : depths)
            if (d < 1) throw ConfigError("model config: every stage depth must be >= 1");
        if (channels < 4 || channels % 4 != 0)
            throw ConfigError("model config: channels must be a positive multiple of 4 (band grouping)");
        if (levels != 1)
            throw ConfigError("model config: only a single wavelet level is supported (levels = 1)");
        if (lambda_perceptual < 0) throw ConfigError("model config: lambda_perceptual must be >= 0");
        if (precision != "f32" && precision != "f64")
            throw ConfigError("model config: precision must be f32 or f64");
        if (hfem_width < 1 || n_state < 1 || expand < 1 || conv_kernel < 1)
            throw ConfigError("model config: widths and kernel sizes must be >= 1");
    }

    std::string depths_str() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < depths.size(); ++i) os << (i ? "," : "") << depths[i];
        return os.str();
    }

    // Canonical text form, embedded in checkpoints.
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
};

inline std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "depths=" << depths_str() << "\n";
    os << "channels=" << channels << "\n";
    os << "levels=" << levels << "\n";
    os << "lambda_perceptual=" << lambda_perceptual << "\n";
    os << "seed=" << seed << "\n";
    os << "precision=" << precision << "\n";
    os << "hfem_width=" << hfem_width << "\n";
    os << "n_state=" << n_state << "\n";
    os << "expand=" << expand << "\n";
    os << "conv_kernel=" << conv_kernel << "\n";
    os << "hfem_identity_skip=" << (hfem_identity_skip ? 1 : 0) << "\n";
    return os.str();
}

inline ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig c;
    c.depths.clear();
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("model config text: missing '=' in \"" + line + "\"");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        try {
            if (key == "depths") {
                std::istringstream ds(val);
                std::string tok;
                while (std::getline(ds, tok, ',')) c.depths.push_back(std::stoi(tok));
            } else if (key == "channels") c.channels = std::stoll(val);
            else if (key == "levels") c.levels = std::stoi(val);
            else if (key == "lambda_perceptual") c.lambda_perceptual = std::stod(val);
            else if (key == "seed") c.seed = std::stoull(val);
            else if (key == "precision") c.precision = val;
            else if (key == "hfem_width") c.hfem_width = std::stoll(val);
            else if (key == "n_state") c.n_state = std::stoll(val);
            else if (key == "expand") c.expand = std::stoll(val);
            else if (key == "conv_kernel") c.conv_kernel = std::stoll(val);
            else if (key == "hfem_identity_skip") c.hfem_identity_skip = std::stoi(val) != 0;
            else throw ConfigError("model config text: unknown key \"" + key + "\"");
        } catch (const std::invalid_argument&) {
            throw ConfigError("model config text: bad value for \"" + key + "\"");
        } catch (const std::out_of_range&) {
            throw ConfigError("model config text: value out of range for \"" + key + "\"");
        }
    }
    c.validate();
    return c;
}

template <typename T>
struct Model {
    ModelConfig cfg;
    ParamStore<T> store;
    blocks::Conv2dLayer<T> stem, proj;
    std::shared_ptr<blocks::HighFreqEnhancer<T>> prior_net;
    std::vector<std::vector<blocks::FusionBlock<T>>> stages;
    std::uint64_t train_steps = 0;

    static Model build(const ModelConfig& cfg) {
        cfg.validate();
        Model m;
        m.cfg = cfg;
        Pcg32 rng(cfg.seed, 7);
        ssm::SsmDefaults dflt{cfg.n_state, cfg.expand, cfg.conv_kernel};
        const std::int64_t C = cfg.channels;
        m.stem = blocks::Conv2dLayer<T>::init(m.store, "stem", 12, C, 3, 1, 1, 4, true, rng);
        m.prior_net = std::make_shared<blocks::HighFreqEnhancer<T>>(blocks::HighFreqEnhancer<T>::init(
            m.store, "prior", 9, cfg.hfem_width, cfg.hfem_identity_skip, rng));
        for (std::size_t si = 0; si < cfg.depths.size(); ++si) {
            std::vector<blocks::FusionBlock<T>> stage;
            for (int bi = 0; bi < cfg.depths[si]; ++bi)
                stage.push_back(blocks::FusionBlock<T>::init(
                    m.store, "stage" + std::to_string(si) + ".block" + std::to_string(bi), C, 9, dflt,
                    m.prior_net, rng));
            m.stages.push_back(std::move(stage));
        }
        m.proj = blocks::Conv2dLayer<T>::init(m.store, "proj", C, 12, 3, 1, 1, 4, true, rng);
        // restoration head starts near the identity mapping: a full-scale
        // random projection would swamp the input with noise and the first
        // chunk of training would be spent recovering it
        Tensor<T>& pw = m.store.entry(m.proj.w).value;
        for (std::int64_t i = 0; i < pw.size(); ++i) pw[i] = T(0.02) * pw[i];
        return m;
    }

    static void check_input(const Shape& sh) {
        if (sh.size() != 4 || sh[1] != 3)
            throw DimensionError("model forward: expected [N,3,H,W], got " + shape_str(sh));
        if (sh[2] % 8 != 0 || sh[3] % 8 != 0)
            throw DimensionError("model forward: spatial extents must be divisible by 8, got " +
                                 shape_str(sh));
        if (sh[2] < 8 || sh[3] < 8) throw DimensionError("model forward: input smaller than 8x8");
    }

    Var forward(Graph<T>& g, const Binding<T>& p, Var image) const {
        check_input(g.value(image).shape());
        Var bands = g.dwt2(image);                  // [N,12,H/2,W/2], [ll|lh|hl|hh]
        Var feat = stem.forward(g, p, bands);       // band-grouped stem
        Var prior_raw = g.narrow(bands, 1, 3, 9);   // stacked detail bands
        Var prior = prior_net->forward(g, p, prior_raw);
        Var x = feat;
        for (const auto& stage : stages) {
            Var stage_in = x;
            for (const auto& blk : stage) x = blk.forward(g, p, x, prior);
            x = g.add(x, stage_in);
        }
        Var r = proj.forward(g, p, x);
        Var rec = g.iwt2(r);
        return g.add(image, rec);
    }

    // Inference path: no gradients, output clamped to [0,1] outside the tape.
    Tensor<T> restore(const Tensor<T>& image) const {
        Graph<T> g;
        Binding<T> p = bind_params(g, store, false);
        Var out = forward(g, p, g.leaf(image, false));
        Tensor<T> y = g.value(out);
        for (std::int64_t i = 0; i < y.size(); ++i) y[i] = std::min(T(1), std::max(T(0), y[i]));
        return y;
    }

    std::int64_t param_count() const { return store.total_params(); }

    // Multiply-accumulate count x2 for convs, matmuls and scans; other ops
    // (activations, wavelet butterflies, pooling) are excluded.
    std::int64_t flop_estimate(std::int64_t H, std::int64_t W) const {
        check_input(Shape{1, 3, H, W});
        auto conv = [](std::int64_t cout, std::int64_t cin_per_group, std::int64_t k, std::int64_t ho,
                       std::int64_t wo) { return 2 * cout * cin_per_group * k * k * ho * wo; };
        auto linear = [](std::int64_t cout, std::int64_t cin, std::int64_t L) { return 2 * cout * cin * L; };
        const std::int64_t C = cfg.channels;
        const std::int64_t Hs = H / 2, Ws = W / 2, L = Hs * Ws;
        std::int64_t f = 0;
        f += conv(C, 3, 3, Hs, Ws);  // stem, grouped by band
        {                            // prior enhancement U-Net at (Hs, Ws)
            const std::int64_t w = cfg.hfem_width;
            f += conv(w, 9, 4, Hs / 2, Ws / 2);
            f += conv(2 * w, w, 4, Hs / 4, Ws / 4);
            f += conv(2 * w, 2 * w, 3, Hs / 4, Ws / 4);
            f += conv(w, 3 * w, 3, Hs / 2, Ws / 2);
            f += conv(9, w + 9, 3, Hs, Ws);
        }
        std::int64_t nblocks = 0;
        for (int d : cfg.depths) nblocks += d;
        {
            std::int64_t fb = 0;
            fb += conv(C / 2, C, 3, Hs, Ws) + conv(C, C / 2, 3, Hs, Ws);  // cnn branch
            const std::int64_t Dm = C / 4, Din = cfg.expand * Dm, S = cfg.n_state;
            const std::int64_t R = std::max<std::int64_t>(1, (Dm + 15) / 16);
            std::int64_t fm = 0;
            fm += linear(2 * Din, Dm, L);
            fm += 2 * Din * cfg.conv_kernel * L;  // causal depthwise conv
            fm += linear(R + 2 * S, Din, L);
            fm += linear(Din, R, L);
            fm += 2 * (4 * L * Din * S + L * Din);  // scan: 4 MACs per state element plus skip
            fm += linear(Dm, Din, L);
            fb += 4 * 4 * fm;  // 4 band kinds x 4 directional passes
            const std::int64_t Sq = (Hs / 2) * (Ws / 2);
            fb += 2 * conv(3 * C, C, 1, Hs / 2, Ws / 2);    // q1, v1 (grouped by 3)
            fb += conv(3 * C, 3, 1, Hs / 2, Ws / 2);        // k1 from 9-channel prior
            fb += 3 * conv(3 * C, 1, 3, Hs / 2, Ws / 2);    // depthwise refiners
            fb += 2 * (3 * C) * (3 * C) * Sq * 2;           // score and mix matmuls
            fb += conv(C, C, 1, Hs, Ws);                    // output projection
            f += nblocks * fb;
        }
        f += conv(12, C / 4, 3, Hs, Ws);  // projection back to bands
        return f;
    }
};

}  // namespace wsr
