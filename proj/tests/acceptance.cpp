// Acceptance gate: one self-contained check per release criterion, each
// printing a [PASS]/[FAIL] line with its measured numbers and elapsed time.
// Exit status is nonzero if any check fails.  Thresholds are pinned here on
// purpose; loosening them is a release decision, not a test edit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "wsr/afsm.hpp"
#include "wsr/bench.hpp"
#include "wsr/blocks.hpp"
#include "wsr/checkpoint.hpp"
#include "wsr/datasynth.hpp"
#include "wsr/gradcheck.hpp"
#include "wsr/image_io.hpp"
#include "wsr/loss.hpp"
#include "wsr/model.hpp"
#include "wsr/ssm.hpp"
#include "wsr/trainer.hpp"
#include "wsr/wavelet.hpp"

using wsr::Graph;
using wsr::Pcg32;
using wsr::Shape;
using wsr::Tensor;
using wsr::Var;

namespace fs = std::filesystem;

namespace {

struct Gate {
    int failures = 0;

    // Runs one criterion, timing it and fencing exceptions into a FAIL line.
    void check(int num, const std::string& name, const std::function<bool(std::string&)>& fn) {
        std::string detail;
        bool ok = false;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            ok = fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %2d %-28s %s (%.1fs)\n", ok ? "PASS" : "FAIL", num, name.c_str(),
                    detail.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

double elapsed_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(3);
    ss << v;
    return ss.str();
}

// ---------------------------------------------------------------------------

bool wavelet_reconstruction(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    Pcg32 rng(101, 1);
    double worst32 = 0, worst64 = 0;
    for (int i = 0; i < 100; ++i) {
        const std::int64_t h = 8 + 2 * std::int64_t(rng.next_below(125));  // even in [8, 256]
        const std::int64_t w = 8 + 2 * std::int64_t(rng.next_below(125));
        Tensor<float> xf = wsr::uniform_tensor<float>(Shape{1, 3, h, w}, rng, 0, 1);
        Tensor<double> xd = wsr::uniform_tensor<double>(Shape{1, 3, h, w}, rng, 0, 1);
        worst32 = std::max(worst32, double(wsr::max_abs_diff(
                                        wsr::wavelet::iwt2(wsr::wavelet::dwt2(xf)), xf)));
        worst64 = std::max(worst64,
                           wsr::max_abs_diff(wsr::wavelet::iwt2(wsr::wavelet::dwt2(xd)), xd));
    }
    const double secs = elapsed_since(t0);
    detail = "max32=" + fmt(worst32) + " max64=" + fmt(worst64) + " n=100";
    return worst32 <= 1e-6 && worst64 <= 1e-12 && secs < 5.0;
}

bool wavelet_energy(std::string& detail) {
    Pcg32 rng(102, 1);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const std::int64_t h = 8 + 4 * std::int64_t(rng.next_below(63));  // divisible by 4
        const std::int64_t w = 8 + 4 * std::int64_t(rng.next_below(63));
        Tensor<double> x = wsr::uniform_tensor<double>(Shape{1, 3, h, w}, rng, -1, 1);
        // check conservation at each level of a two-level transform
        auto lv = wsr::wavelet::dwt_multi(x, 2);
        double ein = wsr::wavelet::frame_energy(x);
        for (const auto& bands : lv) {
            const double eout = wsr::wavelet::bands_energy(bands);
            worst = std::max(worst, std::abs(eout - ein) / ein);
            ein = wsr::wavelet::frame_energy(bands.ll);
        }
    }
    detail = "rel=" + fmt(worst) + " n=100x2lvl";
    return worst <= 1e-6;
}

bool scan_oracle(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    Pcg32 rng(103, 1);
    double worst = 0;
    for (std::int64_t L : {1, 7, 64, 1024}) {
        for (std::int64_t D : {1, 4, 16}) {
            const std::int64_t N = 2, S = 16;
            wsr::ssm::SsmParams<double> p;
            p.A = wsr::uniform_tensor<double>(Shape{D, S}, rng, -2.0, -0.1);
            p.B = wsr::uniform_tensor<double>(Shape{N, S, L}, rng, -1, 1);
            p.C = wsr::uniform_tensor<double>(Shape{N, S, L}, rng, -1, 1);
            p.Dskip = wsr::uniform_tensor<double>(Shape{D}, rng, 0.5, 1.5);
            p.delta = wsr::uniform_tensor<double>(Shape{N, D, L}, rng, 0.01, 0.5);
            Tensor<double> x = wsr::uniform_tensor<double>(Shape{N, D, L}, rng, -1, 1);
            worst = std::max(worst, wsr::rel_max_diff(wsr::ssm::selective_scan(p, x),
                                                      wsr::ssm::naive_recurrence(p, x)));
        }
    }
    const double secs = elapsed_since(t0);
    detail = "rel=" + fmt(worst) + " grid=4Lx3D";
    return worst <= 1e-10 && secs < 30.0;
}

bool complexity_slopes(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::int64_t> lens;
    std::vector<double> times;
    for (std::int64_t L : {4096, 8192, 16384, 32768, 65536}) {
        lens.push_back(L);
        times.push_back(wsr::bench::scan_median_seconds(L, 16, 16, 9));
    }
    const double scan_slope = wsr::bench::loglog_slope(lens, times);
    std::vector<std::int64_t> alens;
    std::vector<double> atimes;
    for (std::int64_t L : {512, 1024, 2048, 4096}) {
        alens.push_back(L);
        atimes.push_back(wsr::bench::attention_median_seconds(L, 32, 9));
    }
    const double attn_slope = wsr::bench::loglog_slope(alens, atimes);
    const double secs = elapsed_since(t0);
    detail = "scan_slope=" + fmt(scan_slope) + " attn_slope=" + fmt(attn_slope);
    return scan_slope >= 0.8 && scan_slope <= 1.3 && attn_slope >= 1.7 && attn_slope <= 2.3 &&
           secs < 180.0;
}

// One primitive gradient check; inputs sized so at least 100 coordinates
// exist across the leaves, sampled 100 per leaf.
struct PrimCheck {
    const char* name;
    std::function<wsr::GradCheckReport()> run;
};

bool gradient_correctness(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    using B = std::function<Var(Graph<double>&, const std::vector<Var>&)>;
    Pcg32 seeder(104, 1);

    auto mk = [&](const Shape& s, double lo, double hi) {
        return wsr::uniform_tensor<double>(s, seeder, lo, hi);
    };
    auto check1 = [&](B build, std::vector<Tensor<double>> leaves) {
        Pcg32 rng(seeder.next_u64(), 2);
        return wsr::grad_check<double>(build, leaves, rng, 100, 1e-5);
    };

    const Shape big{2, 4, 8, 8};  // 512 coordinates
    std::vector<std::pair<const char*, std::function<wsr::GradCheckReport()>>> prims;
    auto scal = [](Graph<double>& g, Var v) { return g.mean_all(g.mul(v, v)); };

    prims.emplace_back("add", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.add(v[0], v[1])); }, {mk(big, -1, 1), mk(big, -1, 1)});
    });
    prims.emplace_back("sub", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.sub(v[0], v[1])); }, {mk(big, -1, 1), mk(big, -1, 1)});
    });
    prims.emplace_back("mul", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.mul(v[0], v[1])); }, {mk(big, -1, 1), mk(big, -1, 1)});
    });
    prims.emplace_back("scale", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.scale(v[0], -1.7)); }, {mk(big, -1, 1)});
    });
    prims.emplace_back("exp", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.exp(v[0])); }, {mk(big, -1, 1)});
    });
    prims.emplace_back("relu", [&] {  // sampled away from the kink at 0
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.relu(v[0])); }, {mk(big, 0.2, 1.2)});
    });
    prims.emplace_back("sigmoid", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.sigmoid(v[0])); }, {mk(big, -2, 2)});
    });
    prims.emplace_back("silu", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.silu(v[0])); }, {mk(big, -2, 2)});
    });
    prims.emplace_back("softplus", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.softplus(v[0])); }, {mk(big, -2, 2)});
    });
    prims.emplace_back("reshape", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.reshape(v[0], {8, 64})); }, {mk(big, -1, 1)});
    });
    prims.emplace_back("permute", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.permute(v[0], {3, 1, 0, 2})); }, {mk(big, -1, 1)});
    });
    prims.emplace_back("concat", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.concat(1, {v[0], v[1]})); }, {mk(Shape{2, 3, 4, 4}, -1, 1),
                                                           mk(Shape{2, 5, 4, 4}, -1, 1)});
    });
    prims.emplace_back("narrow", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.narrow(v[0], 1, 1, 2)); }, {mk(big, -1, 1)});
    });
    prims.emplace_back("gather_last", [&] {
        auto ord = std::make_shared<const std::vector<std::int64_t>>(
            wsr::afsm::antidiagonal(8, 8).order);
        return check1([ord, &scal](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.gather_last(v[0], ord)); }, {mk(Shape{2, 4, 64}, -1, 1)});
    });
    prims.emplace_back("matmul", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.matmul(v[0], v[1])); }, {mk(Shape{2, 6, 7}, -1, 1),
                                                      mk(Shape{2, 7, 5}, -1, 1)});
    });
    prims.emplace_back("softmax", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.softmax(v[0], 1)); }, {mk(Shape{3, 9, 5}, -2, 2)});
    });
    prims.emplace_back("conv2d", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.conv2d(v[0], v[1], v[2], 1, 1, 2)); },
            {mk(Shape{1, 4, 6, 6}, -1, 1), mk(Shape{4, 2, 3, 3}, -1, 1), mk(Shape{4}, -1, 1)});
    });
    prims.emplace_back("conv1d_causal_dw", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.conv1d_causal_dw(v[0], v[1], v[2])); },
            {mk(Shape{2, 4, 16}, -1, 1), mk(Shape{4, 4}, -1, 1), mk(Shape{4}, -1, 1)});
    });
    prims.emplace_back("linear_seq", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.linear_seq(v[0], v[1], v[2])); },
            {mk(Shape{2, 5, 9}, -1, 1), mk(Shape{6, 5}, -1, 1), mk(Shape{6}, -1, 1)});
    });
    prims.emplace_back("dwt2", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.dwt2(v[0])); }, {mk(big, -1, 1)});
    });
    prims.emplace_back("iwt2", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.iwt2(v[0])); }, {mk(Shape{1, 8, 4, 4}, -1, 1)});
    });
    prims.emplace_back("avgpool2", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.avgpool2(v[0])); }, {mk(big, -1, 1)});
    });
    prims.emplace_back("upsample2", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.upsample2(v[0])); }, {mk(Shape{2, 4, 4, 4}, -1, 1)});
    });
    prims.emplace_back("selective_scan", [&] {
        return check1([&](Graph<double>& g, const std::vector<Var>& v) {
            return scal(g, g.selective_scan(v[0], v[1], v[2], v[3], v[4], v[5])); },
            {mk(Shape{2, 3, 10}, -1, 1), mk(Shape{3, 4}, -2, -0.3), mk(Shape{2, 4, 10}, -1, 1),
             mk(Shape{2, 4, 10}, -1, 1), mk(Shape{2, 3, 10}, 0.05, 0.5), mk(Shape{3}, 0.5, 1.5)});
    });
    prims.emplace_back("mean_all", [&] {
        return check1([](Graph<double>& g, const std::vector<Var>& v) {
            return g.mean_all(g.mul(v[0], v[0])); }, {mk(big, -1, 1)});
    });
    prims.emplace_back("sum_all", [&] {
        return check1([](Graph<double>& g, const std::vector<Var>& v) {
            return g.sum_all(g.mul(v[0], v[0])); }, {mk(big, -1, 1)});
    });
    prims.emplace_back("smooth_l1", [&] {  // sampled away from the kink at |e| = 1
        return check1([](Graph<double>& g, const std::vector<Var>& v) {
            return g.smooth_l1(v[0], v[1]); }, {mk(big, -0.4, 0.4), mk(big, -0.4, 0.4)});
    });
    prims.emplace_back("mse", [&] {
        return check1([](Graph<double>& g, const std::vector<Var>& v) {
            return g.mse(v[0], v[1]); }, {mk(big, -1, 1), mk(big, -1, 1)});
    });

    double worst = 0;
    std::string worst_name = "-";
    long total_coords = 0;
    for (auto& [name, run] : prims) {
        const auto rep = run();
        total_coords += rep.coords_checked;
        if (rep.max_rel_err > worst) {
            worst = rep.max_rel_err;
            worst_name = name;
        }
        if (rep.max_rel_err > 1e-4) {
            detail = std::string("primitive ") + name + " rel=" + fmt(rep.max_rel_err) + " " +
                     rep.worst;
            return false;
        }
    }

    // whole modules at toy width: extraction block, attention block, prior
    // U-Net, the fused block, and the training objective
    wsr::ssm::SsmDefaults dflt;
    dflt.n_state = 2;
    dflt.conv_kernel = 3;
    const std::int64_t C = 4;
    Tensor<double> x8 = mk(Shape{1, C, 8, 8}, -0.5, 0.5);
    Tensor<double> prior_raw = mk(Shape{1, 9, 8, 8}, -0.5, 0.5);

    std::vector<std::pair<const char*, std::function<wsr::GradCheckReport()>>> mods;
    mods.emplace_back("extract-block", [&] {
        wsr::ParamStore<double> ps;
        Pcg32 r(7, 3);
        auto b = wsr::blocks::DualBranchBlock<double>::init(ps, "b", C, dflt, r);
        Pcg32 cr(8, 3);
        return wsr::param_grad_check(ps, [&](Graph<double>& g, const wsr::Binding<double>& p) {
            Var y = b.forward(g, p, g.leaf(x8, false));
            return g.mean_all(g.mul(y, y));
        }, cr, 110, 1e-5);
    });
    mods.emplace_back("refine-block", [&] {
        wsr::ParamStore<double> ps;
        Pcg32 r(9, 3);
        auto b = wsr::blocks::PriorGuidedBlock<double>::init(ps, "b", C, 9, r);
        Pcg32 cr(10, 3);
        return wsr::param_grad_check(ps, [&](Graph<double>& g, const wsr::Binding<double>& p) {
            Var y = b.forward(g, p, g.leaf(x8, false), g.leaf(prior_raw, false));
            return g.mean_all(g.mul(y, y));
        }, cr, 110, 1e-5);
    });
    mods.emplace_back("prior-unet", [&] {
        wsr::ParamStore<double> ps;
        Pcg32 r(11, 3);
        auto b = wsr::blocks::HighFreqEnhancer<double>::init(ps, "b", 9, 4, true, r);
        Pcg32 cr(12, 3);
        return wsr::param_grad_check(ps, [&](Graph<double>& g, const wsr::Binding<double>& p) {
            Var y = b.forward(g, p, g.leaf(prior_raw, false));
            return g.mean_all(g.mul(y, y));
        }, cr, 110, 1e-5);
    });
    mods.emplace_back("fused-block", [&] {
        wsr::ParamStore<double> ps;
        Pcg32 r(13, 3);
        auto pn = std::make_shared<wsr::blocks::HighFreqEnhancer<double>>(
            wsr::blocks::HighFreqEnhancer<double>::init(ps, "p", 9, 2, true, r));
        auto b = wsr::blocks::FusionBlock<double>::init(ps, "b", C, 9, dflt, pn, r);
        Pcg32 cr(14, 3);
        return wsr::param_grad_check(ps, [&](Graph<double>& g, const wsr::Binding<double>& p) {
            Var prior = b.prior_net->forward(g, p, g.leaf(prior_raw, false));
            Var y = b.forward(g, p, g.leaf(x8, false), prior);
            return g.mean_all(g.mul(y, y));
        }, cr, 110, 1e-5);
    });
    mods.emplace_back("total-loss", [&] {
        wsr::ConvFeatureStub<double> stub;
        Tensor<double> pred = mk(Shape{1, 3, 8, 8}, 0.3, 0.7);
        Tensor<double> target = mk(Shape{1, 3, 8, 8}, 0.3, 0.7);
        Pcg32 cr(15, 3);
        return wsr::grad_check<double>(
            [&](Graph<double>& g, const std::vector<Var>& v) {
                return wsr::total_loss<double>(g, v[0], v[1], std::cref(stub), 0.01);
            },
            {pred, target}, cr, 100, 1e-5);
    });

    for (auto& [name, run] : mods) {
        const auto rep = run();
        total_coords += rep.coords_checked;
        if (rep.max_rel_err > worst) {
            worst = rep.max_rel_err;
            worst_name = name;
        }
        if (rep.max_rel_err > 1e-4) {
            detail = std::string("module ") + name + " rel=" + fmt(rep.max_rel_err) + " " + rep.worst;
            return false;
        }
    }
    const double secs = elapsed_since(t0);
    detail = "worst=" + fmt(worst) + "@" + worst_name + " coords=" + std::to_string(total_coords);
    return secs < 300.0;
}

bool scan_order_properties(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    Pcg32 rng(105, 1);
    long checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto kind = static_cast<wsr::afsm::BandKind>(rng.next_below(4));
        const std::int64_t h = 1 + std::int64_t(rng.next_below(24));
        const std::int64_t w = 1 + std::int64_t(rng.next_below(24));
        const std::int64_t L = h * w;
        for (const auto& o : wsr::afsm::directional_orders(kind, h, w)) {
            // bijectivity over [0, L)
            std::vector<char> seen(std::size_t(L), 0);
            for (std::int64_t f : o.order) {
                if (f < 0 || f >= L || seen[std::size_t(f)]) {
                    detail = "bijectivity broken";
                    return false;
                }
                seen[std::size_t(f)] = 1;
            }
            // inverse round trip
            const auto inv = wsr::afsm::invert_order(o.order);
            for (std::int64_t t = 0; t < L; ++t)
                if (inv[std::size_t(o.order[std::size_t(t)])] != t) {
                    detail = "inverse round trip broken";
                    return false;
                }
        }
        // horizontal raster is the identity
        std::vector<std::int64_t> iota(static_cast<std::size_t>(L));
        for (std::int64_t i = 0; i < L; ++i) iota[std::size_t(i)] = i;
        if (wsr::afsm::raster_rows(h, w).order != iota) {
            detail = "row scan is not the identity";
            return false;
        }
        // anti-diagonal visits cells in non-decreasing i+j
        std::int64_t prev = -1;
        for (std::int64_t f : wsr::afsm::antidiagonal(h, w).order) {
            const std::int64_t s = f / w + f % w;
            if (s < prev) {
                detail = "anti-diagonal not monotone in i+j";
                return false;
            }
            prev = s;
        }
        ++checked;
    }
    const double secs = elapsed_since(t0);
    detail = "triples=" + std::to_string(checked);
    return checked == 1000 && secs < 10.0;
}

bool pixel_loss_values(std::string& detail) {
    auto val = [](double pred) {
        Graph<double> g;
        Var p = g.leaf(Tensor<double>::scalar(pred), false);
        Var t = g.leaf(Tensor<double>::scalar(0.0), false);
        return g.value(wsr::smooth_l1_loss(g, p, t))[0];
    };
    if (std::abs(val(0.5) - 0.125) > 1e-12) { detail = "0.5 -> " + fmt(val(0.5)); return false; }
    if (std::abs(val(2.0) - 1.5) > 1e-12) { detail = "2.0 -> " + fmt(val(2.0)); return false; }
    // continuity and first-derivative continuity across |e| = 1
    const double eps = 1e-7;
    if (std::abs(val(1.0) - 0.5) > 1e-12) { detail = "discontinuous at 1"; return false; }
    const double sb = (val(1 - eps) - val(1 - 2 * eps)) / eps;
    const double sa = (val(1 + 2 * eps) - val(1 + eps)) / eps;
    if (std::abs(sb - 1.0) > 1e-4 || std::abs(sa - 1.0) > 1e-4) {
        detail = "slope mismatch " + fmt(sb) + " vs " + fmt(sa);
        return false;
    }
    // default perceptual weight
    if (wsr::ModelConfig{}.lambda_perceptual != 0.01) { detail = "default weight"; return false; }
    detail = "0.5->0.125 2->1.5 C1-at-1 lambda=0.01";
    return true;
}

bool toy_restoration(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = fs::temp_directory_path() / ("wsr_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    struct Cleanup { fs::path p; ~Cleanup() { std::error_code ec; fs::remove_all(p, ec); } } cl{dir};

    wsr::synth::DegradeSpec spec;
    spec.kind = "rain";
    spec.density = 0.3;
    spec.seed = 7;
    const std::string manifest = wsr::synth::make_dataset((dir / "ds").string(), 16, 32, 32, spec);
    auto pairs = wsr::synth::load_dataset(manifest);
    std::vector<wsr::synth::DatasetPair> train_pairs(pairs.begin(), pairs.end() - 4);
    std::vector<wsr::synth::DatasetPair> held(pairs.end() - 4, pairs.end());

    wsr::ModelConfig cfg = wsr::ModelConfig::toy();  // depths {1,1}, 8 channels
    cfg.seed = 7;
    auto model = wsr::Model<float>::build(cfg);
    wsr::TrainOptions opt;
    opt.schedule = {{1500, 3e-4}, {500, 1e-4}};
    opt.batch = 2;
    opt.seed = 7;
    wsr::ConvFeatureStub<float> stub;
    wsr::train(model, train_pairs, opt, std::cref(stub), nullptr);

    auto ev = wsr::evaluate(model, held);
    const double secs = elapsed_since(t0);
    detail = "gain=" + fmt(ev.mean_psnr_gain) + "dB in=" + fmt(ev.mean_psnr_in) +
             " out=" + fmt(ev.mean_psnr_out) + " held=4";
    return ev.mean_psnr_gain >= 3.0 && secs < 600.0;
}

bool checkpoint_roundtrip(std::string& detail) {
    const fs::path dir = fs::temp_directory_path() / ("wsr_ckpt_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    struct Cleanup { fs::path p; ~Cleanup() { std::error_code ec; fs::remove_all(p, ec); } } cl{dir};

    wsr::ModelConfig cfg = wsr::ModelConfig::toy();
    cfg.seed = 3;
    auto model = wsr::Model<float>::build(cfg);
    const fs::path ck = dir / "m.ckpt";
    wsr::save_checkpoint(ck.string(), model);
    auto loaded = wsr::load_checkpoint(ck.string());

    Tensor<float> probe = wsr::synth::generate_clean<float>(123, 16, 16);
    Tensor<float> y1 = model.restore(probe);
    Tensor<float> y2 = loaded.restore(probe);
    if (std::memcmp(y1.data(), y2.data(), sizeof(float) * std::size_t(y1.size())) != 0) {
        detail = "forward after reload differs";
        return false;
    }

    // corruption must be rejected by the tool with exit code 4
    std::ifstream f(ck, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    bytes[bytes.size() / 2] = char(bytes[bytes.size() / 2] ^ 0x11);
    const fs::path bad = dir / "bad.ckpt";
    std::ofstream(bad, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
    const fs::path img = dir / "probe.png";
    wsr::write_png(img.string(), probe);
    const std::string cmd = std::string(WSR_BIN) + " restore --checkpoint " + bad.string() +
                            " --in " + img.string() + " --out " + (dir / "o.png").string() +
                            " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 4) {
        detail = "corrupted checkpoint exited with " + std::to_string(code) + ", want 4";
        return false;
    }
    detail = "bit-identical forward; corrupt file -> exit 4";
    return true;
}

bool parameter_budget(std::string& detail) {
    wsr::ModelConfig cfg;  // release defaults
    auto model = wsr::Model<float>::build(cfg);
    const std::int64_t n = model.param_count();
    detail = "param_count=" + std::to_string(n);
    return n >= 8'000'000 && n <= 16'000'000;
}

}  // namespace

int main() {
    wsr::set_thread_count(1);
    Gate gate;
    gate.check(1, "wavelet-reconstruction", wavelet_reconstruction);
    gate.check(2, "wavelet-energy", wavelet_energy);
    gate.check(3, "scan-oracle", scan_oracle);
    gate.check(4, "complexity-slopes", complexity_slopes);
    gate.check(5, "gradient-correctness", gradient_correctness);
    gate.check(6, "scan-order-properties", scan_order_properties);
    gate.check(7, "pixel-loss-values", pixel_loss_values);
    gate.check(8, "toy-restoration", toy_restoration);
    gate.check(9, "checkpoint-roundtrip", checkpoint_roundtrip);
    gate.check(10, "parameter-budget", parameter_budget);
    if (gate.failures) {
        std::printf("%d of 10 checks failed\n", gate.failures);
        return 1;
    }
    std::printf("all 10 checks passed\n");
    return 0;
}
