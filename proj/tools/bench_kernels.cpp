// Times the threaded kernels against their plain serial references and
// verifies the outputs match bit for bit.  Kernels distribute whole output
// elements with a fixed per-element arithmetic order, so the thread count
// must not change results.

#include <cstring>
#include <iostream>
#include <string>
#include <thread>

#include "wsr/bench.hpp"
#include "wsr/kernels.hpp"
#include "wsr/ssm.hpp"

using wsr::Shape;
using wsr::Tensor;

namespace {

int g_threads = int(std::thread::hardware_concurrency());
int g_repeats = 5;
bool g_all_equal = true;

void report(const std::string& name, double serial_s, double parallel_s, bool bitwise_equal) {
    std::cout << name << " serial_s=" << serial_s << " parallel_s=" << parallel_s
              << " speedup=" << serial_s / parallel_s
              << " bitwise_equal=" << (bitwise_equal ? "yes" : "no") << "\n";
    g_all_equal = g_all_equal && bitwise_equal;
}

template <typename T>
bool same_bits(const Tensor<T>& a, const Tensor<T>& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data(), b.data(), sizeof(T) * std::size_t(a.size())) == 0;
}

void bench_conv() {
    wsr::Pcg32 rng(11, 1);
    Tensor<float> x = wsr::uniform_tensor<float>(Shape{2, 16, 96, 96}, rng, -1, 1);
    Tensor<float> w = wsr::uniform_tensor<float>(Shape{16, 16, 3, 3}, rng, -0.3, 0.3);
    Tensor<float> b = wsr::uniform_tensor<float>(Shape{16}, rng, -0.1, 0.1);

    Tensor<float> ys;
    const double ts = wsr::bench::median_time(
        [&] { ys = wsr::kern::ref::conv2d_t<float>(x, w, &b, 1, 1, 1); }, g_repeats);

    wsr::set_thread_count(g_threads);
    Tensor<float> yp;
    const double tp = wsr::bench::median_time(
        [&] { yp = wsr::kern::conv2d<float>(x, w, &b, 1, 1, 1); }, g_repeats);
    wsr::set_thread_count(1);
    Tensor<float> y1 = wsr::kern::conv2d<float>(x, w, &b, 1, 1, 1);

    report("conv2d_3x3", ts, tp, same_bits(ys, yp) && same_bits(y1, yp));
}

void bench_haar() {
    wsr::Pcg32 rng(12, 1);
    Tensor<float> x = wsr::uniform_tensor<float>(Shape{2, 12, 256, 256}, rng, 0, 1);

    Tensor<float> ys;
    const double ts =
        wsr::bench::median_time([&] { ys = wsr::kern::ref::haar2_t<float>(x); }, g_repeats);

    wsr::set_thread_count(g_threads);
    Tensor<float> yp;
    const double tp =
        wsr::bench::median_time([&] { yp = wsr::kern::haar2<float>(x); }, g_repeats);
    wsr::set_thread_count(1);
    Tensor<float> y1 = wsr::kern::haar2<float>(x);

    report("haar2_fwd", ts, tp, same_bits(ys, yp) && same_bits(y1, yp));
}

void bench_matmul() {
    wsr::Pcg32 rng(13, 1);
    Tensor<float> a = wsr::uniform_tensor<float>(Shape{8, 160, 160}, rng, -1, 1);
    Tensor<float> b = wsr::uniform_tensor<float>(Shape{8, 160, 160}, rng, -1, 1);

    Tensor<float> ys;
    const double ts =
        wsr::bench::median_time([&] { ys = wsr::kern::ref::matmul_t<float>(a, b); }, g_repeats);

    wsr::set_thread_count(g_threads);
    Tensor<float> yp;
    const double tp =
        wsr::bench::median_time([&] { yp = wsr::kern::matmul<float>(a, b); }, g_repeats);
    wsr::set_thread_count(1);
    Tensor<float> y1 = wsr::kern::matmul<float>(a, b);

    report("matmul_160", ts, tp, same_bits(ys, yp) && same_bits(y1, yp));
}

void bench_scan() {
    wsr::Pcg32 rng(14, 1);
    const std::int64_t N = 4, D = 16, L = 4096, S = 16;
    Tensor<float> x = wsr::uniform_tensor<float>(Shape{N, D, L}, rng, -1, 1);
    Tensor<float> delta = wsr::uniform_tensor<float>(Shape{N, D, L}, rng, 0.01, 0.1);
    Tensor<float> A = wsr::uniform_tensor<float>(Shape{D, S}, rng, -2, -0.5);
    Tensor<float> B = wsr::uniform_tensor<float>(Shape{N, S, L}, rng, -1, 1);
    Tensor<float> C = wsr::uniform_tensor<float>(Shape{N, S, L}, rng, -1, 1);
    Tensor<float> Dk = wsr::uniform_tensor<float>(Shape{D}, rng, 0.5, 1.5);
    wsr::ssm::SsmParams<float> p{A, B, C, Dk, delta};

    Tensor<float> ys;
    const double ts =
        wsr::bench::median_time([&] { ys = wsr::ssm::naive_recurrence<float>(p, x); }, g_repeats);

    wsr::set_thread_count(g_threads);
    Tensor<float> yp(Shape{N, D, L});
    const double tp = wsr::bench::median_time(
        [&] { wsr::kern::scan<float>(x, A, B, C, delta, Dk, yp); },
        g_repeats);
    wsr::set_thread_count(1);
    Tensor<float> y1(Shape{N, D, L});
    wsr::kern::scan<float>(x, A, B, C, delta, Dk, y1);

    report("selective_scan", ts, tp, same_bits(ys, yp) && same_bits(y1, yp));
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--threads" && i + 1 < argc) g_threads = std::stoi(argv[++i]);
        else if (a == "--repeats" && i + 1 < argc) g_repeats = std::stoi(argv[++i]);
        else {
            std::cerr << "usage: wsr-bench-kernels [--threads n] [--repeats n]\n";
            return 2;
        }
    }
    if (g_threads < 1) g_threads = 1;
    std::cout << "threads=" << g_threads << " repeats=" << g_repeats << "\n";
    bench_conv();
    bench_haar();
    bench_matmul();
    bench_scan();
    if (!g_all_equal) {
        std::cerr << "error: threaded kernel output differs from serial reference\n";
        return 4;
    }
    return 0;
}
