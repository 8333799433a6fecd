// State-space kernel tests: discretization against closed forms, the fused
// scan against the literal recurrence, stability and causality properties,
// and the full sequence branch.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wsr/gradcheck.hpp"
#include "wsr/kernels.hpp"
#include "wsr/ssm.hpp"

using wsr::Graph;
using wsr::Pcg32;
using wsr::Shape;
using wsr::Tensor;
using wsr::Var;
namespace ssm = wsr::ssm;

namespace {

template <typename T>
ssm::SsmParams<T> random_params(std::int64_t N, std::int64_t D, std::int64_t L, std::int64_t S,
                                Pcg32& rng) {
    ssm::SsmParams<T> p;
    p.A = wsr::uniform_tensor<T>(Shape{D, S}, rng, -2.0, -0.1);
    p.B = wsr::uniform_tensor<T>(Shape{N, S, L}, rng, -1, 1);
    p.C = wsr::uniform_tensor<T>(Shape{N, S, L}, rng, -1, 1);
    p.Dskip = wsr::uniform_tensor<T>(Shape{D}, rng, 0.5, 1.5);
    p.delta = wsr::uniform_tensor<T>(Shape{N, D, L}, rng, 0.01, 0.5);
    return p;
}

}  // namespace

TEST_CASE("discretization closed form: A=-1, delta=ln 2") {
    const double ln2 = std::log(2.0);
    Tensor<double> A(Shape{1, 1}, {-1.0});
    Tensor<double> B(Shape{1, 1, 2}, {1.0, 1.0});
    Tensor<double> delta = Tensor<double>::full(Shape{1, 1, 2}, ln2);
    auto [abar, bbar] = ssm::discretize(A, B, delta);
    CHECK(abar[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(abar[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(bbar[0] == doctest::Approx(ln2).epsilon(1e-15));
}

TEST_CASE("discretization rejects non-positive step sizes") {
    Tensor<double> A(Shape{1, 1}, {-1.0});
    Tensor<double> B(Shape{1, 1, 1}, {1.0});
    Tensor<double> dz(Shape{1, 1, 1}, {0.0});
    CHECK_THROWS_AS(ssm::discretize(A, B, dz), wsr::NumericError);
    Tensor<double> dn(Shape{1, 1, 1}, {-0.1});
    CHECK_THROWS_AS(ssm::discretize(A, B, dn), wsr::NumericError);
}

TEST_CASE("tiny steps approach the identity operator") {
    Tensor<double> A(Shape{1, 1}, {-1.5});
    Tensor<double> B(Shape{1, 1, 1}, {0.7});
    Tensor<double> d(Shape{1, 1, 1}, {1e-9});
    auto [abar, bbar] = ssm::discretize(A, B, d);
    CHECK(abar[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(bbar[0] == doctest::Approx(0.7e-9).epsilon(1e-12));
}

TEST_CASE("two-step recurrence by hand") {
    // Abar = 1/2, Bbar = ln2, C = 1, D = 0, x = [1, 1]
    // h1 = ln2, y1 = ln2; h2 = ln2/2 + ln2 = 1.5 ln2, y2 = 1.5 ln2
    ssm::SsmParams<double> p;
    p.A = Tensor<double>(Shape{1, 1}, {-1.0});
    p.B = Tensor<double>(Shape{1, 1, 2}, {1.0, 1.0});
    p.C = Tensor<double>(Shape{1, 1, 2}, {1.0, 1.0});
    p.Dskip = Tensor<double>(Shape{1}, {0.0});
    p.delta = Tensor<double>::full(Shape{1, 1, 2}, std::log(2.0));
    Tensor<double> x = Tensor<double>::full(Shape{1, 1, 2}, 1.0);
    Tensor<double> y = ssm::naive_recurrence(p, x);
    CHECK(y[0] == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(y[1] == doctest::Approx(1.039721).epsilon(1e-6));
    // the skip path adds D*x on top
    p.Dskip[0] = 2.0;
    Tensor<double> y2 = ssm::naive_recurrence(p, x);
    CHECK(y2[0] == doctest::Approx(0.693147 + 2.0).epsilon(1e-6));
    Tensor<double> y3 = ssm::selective_scan(p, x);
    CHECK(wsr::max_abs_diff(y2, y3) < 1e-15);
}

TEST_CASE("fused scan equals the literal recurrence") {
    Pcg32 rng(21, 9);
    for (auto [N, D, L, S] : {std::array<std::int64_t, 4>{1, 1, 7, 1},
                              std::array<std::int64_t, 4>{2, 4, 33, 8},
                              std::array<std::int64_t, 4>{1, 16, 128, 16}}) {
        auto p = random_params<double>(N, D, L, S, rng);
        Tensor<double> x = wsr::uniform_tensor<double>(Shape{N, D, L}, rng, -1, 1);
        Tensor<double> want = ssm::naive_recurrence(p, x);
        Tensor<double> got = ssm::selective_scan(p, x);
        CHECK(wsr::rel_max_diff(got, want) < 1e-12);
    }
}

TEST_CASE("scan and recurrence agree bitwise under identical evaluation order") {
    Pcg32 rng(22, 9);
    auto p = random_params<double>(2, 3, 64, 4, rng);
    Tensor<double> x = wsr::uniform_tensor<double>(Shape{2, 3, 64}, rng, -1, 1);
    Tensor<double> a = ssm::naive_recurrence(p, x);
    Tensor<double> b = ssm::selective_scan(p, x);
    CHECK(wsr::max_abs_diff(a, b) == 0.0);
}

TEST_CASE("state stays inside the geometric bound") {
    // with maxAbar < 1, ||h||_inf <= max|Bbar x| / (1 - maxAbar)
    Pcg32 rng(23, 9);
    const std::int64_t N = 1, D = 2, L = 256, S = 4;
    auto p = random_params<double>(N, D, L, S, rng);
    Tensor<double> x = wsr::uniform_tensor<double>(Shape{N, D, L}, rng, -1, 1);
    auto [abar, bbar] = ssm::discretize(p.A, p.B, p.delta);
    double max_abar = 0, max_bx = 0;
    for (std::int64_t i = 0; i < abar.size(); ++i) max_abar = std::max(max_abar, abar[i]);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t d = 0; d < D; ++d)
            for (std::int64_t t = 0; t < L; ++t)
                for (std::int64_t s = 0; s < S; ++s)
                    max_bx = std::max(max_bx, std::abs(bbar[((n * D + d) * L + t) * S + s] *
                                                       x[(n * D + d) * L + t]));
    REQUIRE(max_abar < 1.0);
    const double bound = max_bx / (1.0 - max_abar);

    Tensor<double> cache_abar(Shape{N, D, L, S});
    Tensor<double> cache_h(Shape{N, D, L, S});
    Tensor<double> y(Shape{N, D, L});
    wsr::kern::scan_fwd(x.data(), p.A.data(), p.B.data(), p.C.data(), p.delta.data(), p.Dskip.data(),
                        y.data(), N, D, L, S, cache_abar.data(), cache_h.data());
    for (std::int64_t i = 0; i < cache_h.size(); ++i) CHECK(std::abs(cache_h[i]) <= bound + 1e-12);
}

TEST_CASE("scan output is causal") {
    Pcg32 rng(24, 9);
    const std::int64_t L = 32;
    auto p = random_params<double>(1, 2, L, 4, rng);
    Tensor<double> x = wsr::uniform_tensor<double>(Shape{1, 2, L}, rng, -1, 1);
    Tensor<double> y0 = ssm::selective_scan(p, x);
    Tensor<double> x2 = x;
    x2.at(0, 1, 20) += 0.5;
    Tensor<double> y1 = ssm::selective_scan(p, x2);
    for (std::int64_t d = 0; d < 2; ++d)
        for (std::int64_t t = 0; t < 20; ++t) CHECK(y0.at(0, d, t) == y1.at(0, d, t));
    CHECK(y0.at(0, 1, 20) != y1.at(0, 1, 20));
}

TEST_CASE("channels do not mix inside the scan") {
    Pcg32 rng(25, 9);
    const std::int64_t L = 16;
    auto p = random_params<double>(1, 3, L, 4, rng);
    Tensor<double> x = wsr::uniform_tensor<double>(Shape{1, 3, L}, rng, -1, 1);
    Tensor<double> y0 = ssm::selective_scan(p, x);
    Tensor<double> x2 = x;
    for (std::int64_t t = 0; t < L; ++t) x2.at(0, 2, t) = 0.0;
    Tensor<double> y1 = ssm::selective_scan(p, x2);
    for (std::int64_t t = 0; t < L; ++t) {
        CHECK(y0.at(0, 0, t) == y1.at(0, 0, t));
        CHECK(y0.at(0, 1, t) == y1.at(0, 1, t));
    }
}

TEST_CASE("parameter shape validation") {
    Pcg32 rng(26, 9);
    auto p = random_params<double>(1, 2, 8, 4, rng);
    Tensor<double> x = wsr::uniform_tensor<double>(Shape{1, 2, 8}, rng, -1, 1);
    CHECK_NOTHROW(ssm::validate(p, 1, 2, 8));
    auto bad = p;
    bad.B = wsr::uniform_tensor<double>(Shape{1, 4, 9}, rng, -1, 1);
    CHECK_THROWS_AS(ssm::validate(bad, 1, 2, 8), wsr::DimensionError);
    auto pos = p;
    pos.A.at(1, 2) = 0.5;  // A must stay strictly negative
    CHECK_THROWS_AS(ssm::validate(pos, 1, 2, 8), wsr::NumericError);
}

TEST_CASE("graph scan op matches the module-level scan") {
    Pcg32 rng(27, 9);
    const std::int64_t N = 2, D = 3, L = 12, S = 4;
    auto p = random_params<double>(N, D, L, S, rng);
    Tensor<double> x = wsr::uniform_tensor<double>(Shape{N, D, L}, rng, -1, 1);
    Tensor<double> want = ssm::selective_scan(p, x);
    Graph<double> g;
    Var y = g.selective_scan(g.leaf(x, false), g.leaf(p.A, false), g.leaf(p.B, false),
                             g.leaf(p.C, false), g.leaf(p.delta, false), g.leaf(p.Dskip, false));
    CHECK(wsr::max_abs_diff(g.value(y), want) == 0.0);
}

TEST_CASE("sequence branch: shapes, determinism and negative dynamics") {
    wsr::ParamStore<double> ps;
    Pcg32 rng(5, 9);
    ssm::SsmDefaults dflt;
    dflt.n_state = 4;
    auto mb = ssm::MambaBranch<double>::init(ps, "mb", 8, dflt, rng);
    CHECK(mb.d_inner == 16);
    CHECK(mb.dt_rank == 1);

    // A = -exp(a_log) is strictly negative by construction
    const Tensor<double>& al = ps.entries()[static_cast<std::size_t>(mb.a_log)].value;
    for (std::int64_t i = 0; i < al.size(); ++i) CHECK(-std::exp(al[i]) < 0.0);

    Pcg32 drng(6, 9);
    Tensor<double> x = wsr::uniform_tensor<double>(Shape{2, 8, 10}, drng, -1, 1);
    Graph<double> g;
    auto bind = wsr::bind_params(g, ps, false);
    Var y = mb.forward(g, bind, g.leaf(x, false));
    CHECK(g.value(y).shape() == Shape{2, 8, 10});

    // rebuilding on a fresh tape reproduces the same output exactly
    Graph<double> g2;
    auto bind2 = wsr::bind_params(g2, ps, false);
    Var y2 = mb.forward(g2, bind2, g2.leaf(x, false));
    CHECK(wsr::max_abs_diff(g.value(y), g2.value(y2)) == 0.0);

    // dt_rank grows with the model width
    auto mb2 = ssm::MambaBranch<double>::init(ps, "mb2", 48, dflt, rng);
    CHECK(mb2.dt_rank == 3);
}

TEST_CASE("gradcheck: scan inside the sequence branch wiring") {
    // small end-to-end check through in_proj, conv, scan, gate and out_proj
    wsr::ParamStore<double> ps;
    Pcg32 rng(7, 9);
    ssm::SsmDefaults dflt;
    dflt.n_state = 2;
    dflt.conv_kernel = 3;
    auto mb = ssm::MambaBranch<double>::init(ps, "mb", 4, dflt, rng);
    Pcg32 drng(8, 9);
    Tensor<double> x = wsr::uniform_tensor<double>(Shape{1, 4, 6}, drng, -0.5, 0.5);
    Pcg32 crng(9, 9);
    auto rep = wsr::param_grad_check(
        ps,
        [&](Graph<double>& g, const wsr::Binding<double>& bind) {
            Var y = mb.forward(g, bind, g.leaf(x, false));
            return g.mean_all(g.mul(y, y));
        },
        crng, 80, 1e-5);
    INFO("worst: ", rep.worst);
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("attention oracle on a tiny case") {
    // D=1: softmax over scores is row-stochastic, single head, no scaling
    // tricks; with all weights = 1, q_t = x_t, k = x, v = x
    Tensor<double> x(Shape{1, 3}, {1.0, 2.0, 3.0});
    Tensor<double> w(Shape{1, 1}, {1.0});
    Tensor<double> y = ssm::attention_reference(x, w, w, w);
    // scores row t: x_t * x_u; weights softmax over u; y_t = sum w_u x_u
    for (std::int64_t t = 0; t < 3; ++t) {
        double m = -1e300;
        std::array<double, 3> sc{};
        for (std::int64_t u = 0; u < 3; ++u) {
            sc[static_cast<std::size_t>(u)] = x[t] * x[u];
            m = std::max(m, sc[static_cast<std::size_t>(u)]);
        }
        double z = 0, acc = 0;
        for (std::int64_t u = 0; u < 3; ++u) z += std::exp(sc[static_cast<std::size_t>(u)] - m);
        for (std::int64_t u = 0; u < 3; ++u)
            acc += std::exp(sc[static_cast<std::size_t>(u)] - m) / z * x[u];
        CHECK(y[t] == doctest::Approx(acc).epsilon(1e-12));
    }
}
