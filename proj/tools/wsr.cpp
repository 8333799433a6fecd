// Command-line front end: wavelet decomposition of images, synthetic weather
// datasets, training, restoration, evaluation, scan benchmarks and gradient
// checks.  Exit codes: 0 ok, 2 usage or config, 3 file I/O, 4 numeric or
// checkpoint failure, 5 threshold failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "wsr/bench.hpp"
#include "wsr/checkpoint.hpp"
#include "wsr/datasynth.hpp"
#include "wsr/gradcheck.hpp"
#include "wsr/image_io.hpp"
#include "wsr/loss.hpp"
#include "wsr/runconfig.hpp"
#include "wsr/trainer.hpp"
#include "wsr/wavelet.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kUsage = 2, kIo = 3, kNumeric = 4, kThreshold = 5;

struct DwtArgs {
    std::string in, out_dir;
    int levels = 1;
};

int run_dwt(const DwtArgs& a) {
    if (a.levels < 1) throw wsr::ConfigError("dwt: --levels must be >= 1");
    wsr::Tensor<float> img = wsr::read_png(a.in);
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw wsr::IoError("cannot create output directory " + a.out_dir + ": " + ec.message());

    auto levels = wsr::wavelet::dwt_multi(img, a.levels);
    for (const auto& bands : levels) {
        auto viz_high = [&](const wsr::Tensor<float>& t) {
            wsr::Tensor<float> v(t.shape());
            for (std::int64_t i = 0; i < t.size(); ++i)
                v[i] = std::min(1.0f, std::max(0.0f, 0.5f + t[i] / 2.0f));
            return v;
        };
        const float ll_scale = float(std::pow(2.0, bands.level));
        wsr::Tensor<float> llv(bands.ll.shape());
        for (std::int64_t i = 0; i < llv.size(); ++i)
            llv[i] = std::min(1.0f, std::max(0.0f, bands.ll[i] / ll_scale));
        const std::string sfx = "_" + std::to_string(bands.level) + ".png";
        wsr::write_png((fs::path(a.out_dir) / ("ll" + sfx)).string(), llv);
        wsr::write_png((fs::path(a.out_dir) / ("lh" + sfx)).string(), viz_high(bands.lh));
        wsr::write_png((fs::path(a.out_dir) / ("hl" + sfx)).string(), viz_high(bands.hl));
        wsr::write_png((fs::path(a.out_dir) / ("hh" + sfx)).string(), viz_high(bands.hh));
    }
    wsr::Tensor<float> rec = wsr::wavelet::iwt_multi(levels);
    const double err = double(wsr::max_abs_diff(rec, img));
    std::cout << "recon_error=" << err << "\n";
    if (err > 1e-4) {
        std::cerr << "error: reconstruction error " << err << " exceeds 1e-4\n";
        return kThreshold;
    }
    return kOk;
}

struct SynthArgs {
    std::int64_t n = 16, h = 32, w = 32;
    wsr::synth::DegradeSpec spec;
    std::string out_dir;
};

int run_synth(const SynthArgs& a) {
    const std::string manifest = wsr::synth::make_dataset(a.out_dir, a.n, a.h, a.w, a.spec);
    std::cout << "manifest=" << manifest << "\n";
    return kOk;
}

struct TrainArgs {
    std::string config, out_checkpoint;
    std::vector<std::string> overrides;
};

wsr::ModelConfig model_config_from(wsr::RunConfig& cfg) {
    wsr::ModelConfig mc = wsr::ModelConfig::toy();
    mc.depths = cfg.get_int_list("model.depths", mc.depths);
    mc.channels = cfg.get_i64("model.channels", mc.channels);
    mc.lambda_perceptual = cfg.get_double("model.lambda", mc.lambda_perceptual);
    mc.seed = std::uint64_t(cfg.get_i64("model.seed", std::int64_t(mc.seed)));
    mc.hfem_width = cfg.get_i64("model.hfem_width", mc.hfem_width);
    mc.n_state = cfg.get_i64("model.n_state", mc.n_state);
    mc.expand = cfg.get_i64("model.expand", mc.expand);
    mc.conv_kernel = cfg.get_i64("model.conv_kernel", mc.conv_kernel);
    mc.hfem_identity_skip = cfg.get_bool("model.hfem_identity_skip", mc.hfem_identity_skip);
    mc.validate();
    return mc;
}

void print_eval(const wsr::EvalResult& ev) {
    for (const auto& r : ev.rows)
        std::cout << "pair=" << r.index << " psnr_in=" << r.psnr_in << " psnr=" << r.psnr_out
                  << " ssim_in=" << r.ssim_in << " ssim=" << r.ssim_out << "\n";
    std::cout << "mean_psnr_in=" << ev.mean_psnr_in << " mean_psnr=" << ev.mean_psnr_out << "\n";
    std::cout << "mean_ssim_in=" << ev.mean_ssim_in << " mean_ssim=" << ev.mean_ssim_out << "\n";
    std::cout << "mean_psnr_gain=" << ev.mean_psnr_gain << "\n";
}

int run_train(const TrainArgs& a) {
    wsr::RunConfig cfg = wsr::RunConfig::from_file(a.config);
    for (const auto& o : a.overrides) cfg.apply_override(o);

    wsr::ModelConfig mc = model_config_from(cfg);
    const std::string manifest = cfg.require_string("data.manifest");
    wsr::TrainOptions opt;
    opt.schedule = cfg.get_schedule("train.schedule", opt.schedule);
    opt.batch = cfg.get_i64("train.batch", opt.batch);
    opt.seed = std::uint64_t(cfg.get_i64("train.seed", std::int64_t(opt.seed)));
    opt.crop = cfg.get_i64("train.crop", opt.crop);
    opt.clip_norm = cfg.get_double("train.clip_norm", opt.clip_norm);
    opt.log_every = cfg.get_i64("train.log_every", 100);
    opt.prefetch = cfg.get_bool("train.prefetch", opt.prefetch);
    const std::int64_t holdout = cfg.get_i64("train.holdout", 0);
    const std::string history_path = cfg.get_string("train.loss_history", "");
    cfg.finish();
    cfg.echo(std::cout);
    opt.validate();

    auto pairs = wsr::synth::load_dataset(manifest);
    if (holdout < 0 || holdout >= std::int64_t(pairs.size()))
        throw wsr::ConfigError("train.holdout must be in [0, pair count)");
    std::vector<wsr::synth::DatasetPair> train_pairs(pairs.begin(), pairs.end() - holdout);
    std::vector<wsr::synth::DatasetPair> held(pairs.end() - holdout, pairs.end());

    wsr::Model<float> model = wsr::Model<float>::build(mc);
    std::cout << "param_count=" << model.param_count() << "\n";
    wsr::ConvFeatureStub<float> stub;
    wsr::FeatureFn<float> features = [&stub](wsr::Graph<float>& g, wsr::Var x) { return stub(g, x); };
    wsr::TrainResult res = wsr::train(model, train_pairs, opt, features, &std::cout);
    std::cout << "final_loss=" << res.loss_history.back() << "\n";

    if (!history_path.empty()) {
        std::ofstream hf(history_path, std::ios::trunc);
        if (!hf) throw wsr::IoError("cannot open loss history for writing: " + history_path);
        for (std::size_t i = 0; i < res.loss_history.size(); ++i)
            hf << (i + 1) << ',' << res.loss_history[i] << "\n";
        if (!hf) throw wsr::IoError("write failure on loss history: " + history_path);
    }

    wsr::save_checkpoint(a.out_checkpoint, model);
    std::cout << "checkpoint=" << a.out_checkpoint << "\n";

    if (holdout > 0) print_eval(wsr::evaluate(model, held));
    return kOk;
}

struct RestoreArgs {
    std::string checkpoint, in, out;
};

int run_restore(const RestoreArgs& a) {
    wsr::Model<float> model = wsr::load_checkpoint(a.checkpoint);
    wsr::Tensor<float> img = wsr::read_png(a.in);
    wsr::Tensor<float> out = model.restore(img);
    wsr::write_png(a.out, out);
    std::cout << "restored=" << a.out << "\n";
    return kOk;
}

struct EvalArgs {
    std::string checkpoint, manifest;
};

int run_eval(const EvalArgs& a) {
    wsr::Model<float> model = wsr::load_checkpoint(a.checkpoint);
    print_eval(wsr::evaluate(model, wsr::synth::load_dataset(a.manifest)));
    return kOk;
}

struct BenchArgs {
    std::vector<std::int64_t> lens{1024, 2048, 4096, 8192};
    std::vector<std::int64_t> dims{16};
    std::vector<std::int64_t> attn_lens{256, 512, 1024, 2048};
    std::int64_t state = 16, attn_dim = 32;
    int repeats = 9;
    bool check = false;
};

int run_bench_scan(const BenchArgs& a) {
    if (a.repeats < 1) throw wsr::ConfigError("bench-scan: --repeats must be >= 1");
    if (a.lens.size() < 2 || a.attn_lens.size() < 2)
        throw wsr::ConfigError("bench-scan: need at least two lengths per series");
    bool ok = true;
    for (std::int64_t d : a.dims) {
        std::vector<double> times;
        for (std::int64_t L : a.lens) {
            const double t = wsr::bench::scan_median_seconds(L, d, a.state, a.repeats);
            times.push_back(t);
            std::cout << "scan len=" << L << " d=" << d << " median_s=" << t << "\n";
        }
        const double slope = wsr::bench::loglog_slope(a.lens, times);
        std::cout << "scan_slope d=" << d << " slope=" << slope << "\n";
        if (slope < 0.8 || slope > 1.3) ok = false;
    }
    {
        std::vector<double> times;
        for (std::int64_t L : a.attn_lens) {
            const double t = wsr::bench::attention_median_seconds(L, a.attn_dim, a.repeats);
            times.push_back(t);
            std::cout << "attention len=" << L << " d=" << a.attn_dim << " median_s=" << t << "\n";
        }
        const double slope = wsr::bench::loglog_slope(a.attn_lens, times);
        std::cout << "attention_slope=" << slope << "\n";
        if (slope < 1.7 || slope > 2.3) ok = false;
    }
    if (a.check && !ok) {
        std::cerr << "error: growth exponents outside expected ranges\n";
        return kThreshold;
    }
    return kOk;
}

struct GradcheckArgs {
    std::int64_t samples = 120;
    std::uint64_t seed = 7;
};

int run_gradcheck(const GradcheckArgs& a) {
    if (a.samples < 1) throw wsr::ConfigError("gradcheck: --samples must be >= 1");
    wsr::ModelConfig mc = wsr::ModelConfig::toy();
    mc.seed = a.seed;
    wsr::Model<double> model = wsr::Model<double>::build(mc);
    wsr::Tensor<double> input = wsr::synth::generate_clean<double>(wsr::mix_seed(a.seed, 1), 8, 8);
    wsr::Tensor<double> target = wsr::synth::generate_clean<double>(wsr::mix_seed(a.seed, 2), 8, 8);
    wsr::ConvFeatureStub<double> stub;
    auto build = [&](wsr::Graph<double>& g, const wsr::Binding<double>& p) {
        wsr::Var pred = model.forward(g, p, g.leaf(input, false));
        return wsr::total_loss<double>(
            g, pred, g.leaf(target, false),
            [&stub](wsr::Graph<double>& gg, wsr::Var x) { return stub(gg, x); },
            mc.lambda_perceptual);
    };
    wsr::Pcg32 rng(a.seed, 61);
    wsr::GradCheckReport rep = wsr::param_grad_check(model.store, build, rng, a.samples, 1e-5);
    std::cout << "coords_checked=" << rep.coords_checked << "\n";
    std::cout << "max_rel_err=" << rep.max_rel_err << "\n";
    if (rep.max_rel_err > 1e-4) {
        std::cerr << "error: gradient mismatch, worst at " << rep.worst << "\n";
        return kThreshold;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) try {
    CLI::App app{"wavelet-domain weather restoration toolkit"};
    app.require_subcommand(1);
    // long-form help only: synth uses --h for the image height
    app.set_help_flag("--help", "print help and exit");
    int threads = 1;
    app.add_option("--threads", threads, "worker threads for tensor kernels (default 1)")
        ->check(CLI::PositiveNumber);

    std::function<int()> action;
    auto sub = [&](const char* name, const char* what) {
        CLI::App* s = app.add_subcommand(name, what);
        s->set_help_flag("--help", "print help and exit");
        return s;
    };

    DwtArgs dwt;
    auto* cd = sub("dwt", "decompose an image into wavelet bands");
    cd->add_option("--in", dwt.in, "input PNG")->required();
    cd->add_option("--out-dir", dwt.out_dir, "directory for band images")->required();
    cd->add_option("--levels", dwt.levels, "decomposition levels (default 1)");
    cd->callback([&] { action = [&] { return run_dwt(dwt); }; });

    SynthArgs synth;
    auto* cs = sub("synth", "generate a synthetic weather dataset");
    cs->add_option("--n", synth.n, "pair count (default 16)");
    cs->add_option("--h", synth.h, "image height (default 32)");
    cs->add_option("--w", synth.w, "image width (default 32)");
    cs->add_option("--kind", synth.spec.kind, "rain or snow (default rain)");
    cs->add_option("--density", synth.spec.density, "overlay density in [0,1] (default 0.3)");
    cs->add_option("--angle", synth.spec.angle, "rain angle, degrees from vertical (default 0)");
    cs->add_option("--particle-radius", synth.spec.particle_radius,
                   "snow disc radius in px (default 2)");
    cs->add_option("--intensity", synth.spec.intensity, "overlay strength in [0,1] (default 0.8)");
    cs->add_option("--seed", synth.spec.seed, "dataset seed (default 0)");
    cs->add_option("--out-dir", synth.out_dir, "output directory")->required();
    cs->callback([&] { action = [&] { return run_synth(synth); }; });

    TrainArgs train;
    auto* ct = sub("train", "train a model from a config file");
    ct->add_option("--config", train.config, "key = value config file")->required();
    ct->add_option("--out-checkpoint", train.out_checkpoint, "checkpoint to write")->required();
    ct->add_option("--set", train.overrides, "override config entries, key=value (repeatable)");
    ct->callback([&] { action = [&] { return run_train(train); }; });

    RestoreArgs restore;
    auto* cr = sub("restore", "run a checkpoint on one image");
    cr->add_option("--checkpoint", restore.checkpoint, "checkpoint file")->required();
    cr->add_option("--in", restore.in, "degraded input PNG")->required();
    cr->add_option("--out", restore.out, "restored output PNG")->required();
    cr->callback([&] { action = [&] { return run_restore(restore); }; });

    EvalArgs evalc;
    auto* ce = sub("eval", "score a checkpoint against a dataset manifest");
    ce->add_option("--checkpoint", evalc.checkpoint, "checkpoint file")->required();
    ce->add_option("--manifest", evalc.manifest, "dataset manifest")->required();
    ce->callback([&] { action = [&] { return run_eval(evalc); }; });

    BenchArgs bench;
    auto* cb = sub("bench-scan", "time the scan against quadratic attention");
    cb->add_option("--lens", bench.lens, "scan sequence lengths")->delimiter(',');
    cb->add_option("--dims", bench.dims, "scan channel widths")->delimiter(',');
    cb->add_option("--state", bench.state, "scan state size (default 16)");
    cb->add_option("--attn-lens", bench.attn_lens, "attention sequence lengths")->delimiter(',');
    cb->add_option("--attn-dim", bench.attn_dim, "attention token width (default 32)");
    cb->add_option("--repeats", bench.repeats, "timed repeats per point (default 9)");
    cb->add_flag("--check", bench.check, "fail (exit 5) if growth exponents fall outside ranges");
    cb->callback([&] { action = [&] { return run_bench_scan(bench); }; });

    GradcheckArgs gc;
    auto* cg = sub("gradcheck", "finite-difference check on a toy model");
    cg->add_option("--samples", gc.samples, "parameter coordinates to probe (default 120)");
    cg->add_option("--seed", gc.seed, "seed (default 7)");
    cg->callback([&] { action = [&] { return run_gradcheck(gc); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    wsr::set_thread_count(threads);
    return action ? action() : kUsage;
} catch (const wsr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
} catch (const wsr::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
} catch (const wsr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
} catch (const wsr::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
} catch (const wsr::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
} catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
}
