// Whole-model tests: configuration round trips, input contracts, the
// zero-residual identity property, parameter budgets and checkpoint
// round-trips including corruption handling.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wsr/checkpoint.hpp"
#include "wsr/datasynth.hpp"
#include "wsr/model.hpp"

using wsr::ModelConfig;
using wsr::Pcg32;
using wsr::Shape;
using wsr::Tensor;

namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path path;
    TmpDir() {
        path = fs::temp_directory_path() / ("wsr_model_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TmpDir() { std::error_code ec; fs::remove_all(path, ec); }
};

}  // namespace

TEST_CASE("config text round trip and unknown keys") {
    ModelConfig c = ModelConfig::toy();
    c.channels = 12;
    c.lambda_perceptual = 0.05;
    c.seed = 9;
    ModelConfig back = ModelConfig::from_text(c.to_text());
    CHECK(back.depths == c.depths);
    CHECK(back.channels == c.channels);
    CHECK(back.lambda_perceptual == doctest::Approx(c.lambda_perceptual));
    CHECK(back.seed == c.seed);
    CHECK(back.precision == c.precision);
    CHECK(back.to_text() == c.to_text());

    CHECK_THROWS_AS(ModelConfig::from_text("bogus_key=1\n"), wsr::ConfigError);
}

TEST_CASE("config validation") {
    ModelConfig c = ModelConfig::toy();
    c.channels = 10;  // not divisible by 4
    CHECK_THROWS_AS(c.validate(), wsr::ConfigError);
    c = ModelConfig::toy();
    c.precision = "f16";
    CHECK_THROWS_AS(c.validate(), wsr::ConfigError);
    c = ModelConfig::toy();
    c.depths.clear();
    CHECK_THROWS_AS(c.validate(), wsr::ConfigError);
}

TEST_CASE("toy model restores to the input shape with values in range") {
    ModelConfig cfg = ModelConfig::toy();
    cfg.seed = 5;
    auto model = wsr::Model<float>::build(cfg);
    Tensor<float> img = wsr::synth::generate_clean<float>(11, 16, 24);
    Tensor<float> out = model.restore(img);
    CHECK(out.shape() == img.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] >= 0.0f);
        CHECK(out[i] <= 1.0f);
    }
}

TEST_CASE("input contract: rank 4, 3 channels, extents divisible by 8") {
    CHECK_NOTHROW(wsr::Model<float>::check_input(Shape{1, 3, 8, 16}));
    CHECK_THROWS_AS(wsr::Model<float>::check_input(Shape{1, 3, 12, 16}), wsr::DimensionError);
    CHECK_THROWS_AS(wsr::Model<float>::check_input(Shape{1, 1, 16, 16}), wsr::DimensionError);
    CHECK_THROWS_AS(wsr::Model<float>::check_input(Shape{3, 16, 16}), wsr::DimensionError);
    CHECK_THROWS_AS(wsr::Model<float>::check_input(Shape{1, 3, 16, 4}), wsr::DimensionError);
}

TEST_CASE("zeroing the output projection makes the model the identity") {
    ModelConfig cfg = ModelConfig::toy();
    cfg.seed = 6;
    auto model = wsr::Model<float>::build(cfg);
    const int wi = model.store.find("proj.w");
    const int bi = model.store.find("proj.b");
    REQUIRE(wi >= 0);
    REQUIRE(bi >= 0);
    auto& wv = model.store.entry(wi).value;
    auto& bv = model.store.entry(bi).value;
    for (std::int64_t i = 0; i < wv.size(); ++i) wv[i] = 0.0f;
    for (std::int64_t i = 0; i < bv.size(); ++i) bv[i] = 0.0f;

    Tensor<float> img = wsr::synth::generate_clean<float>(12, 16, 16);
    Tensor<float> out = model.restore(img);
    // residual is exactly zero, so the only change is the [0,1] clamp
    CHECK(wsr::max_abs_diff(out, img) <= 1.0f / 255.0f);
}

TEST_CASE("parameter budget of the full configuration") {
    ModelConfig cfg;  // defaults: depths 6,6,4,4, channels 180
    cfg.validate();
    auto model = wsr::Model<float>::build(cfg);
    const std::int64_t n = model.param_count();
    MESSAGE("full model parameters: ", n);
    CHECK(n >= 8'000'000);
    CHECK(n <= 16'000'000);
}

TEST_CASE("flop estimate scales with the pixel count") {
    ModelConfig cfg = ModelConfig::toy();
    auto model = wsr::Model<float>::build(cfg);
    const std::int64_t f1 = model.flop_estimate(32, 32);
    const std::int64_t f2 = model.flop_estimate(64, 64);
    CHECK(f1 > 0);
    // the scan path is linear in pixels and convs are too, so 4x pixels
    // lands close to 4x work
    CHECK(f2 > 3 * f1);
    CHECK(f2 < 5 * f1);
}

TEST_CASE("checkpoint round trip is bit exact") {
    TmpDir tmp;
    ModelConfig cfg = ModelConfig::toy();
    cfg.seed = 17;
    cfg.channels = 8;
    auto model = wsr::Model<float>::build(cfg);
    model.train_steps = 123;
    const std::string path = (tmp.path / "m.ckpt").string();
    wsr::save_checkpoint(path, model);

    auto loaded = wsr::load_checkpoint(path);
    CHECK(loaded.train_steps == 123);
    CHECK(loaded.cfg.to_text() == cfg.to_text());
    REQUIRE(loaded.store.count() == model.store.count());
    for (int i = 0; i < static_cast<int>(model.store.count()); ++i) {
        const auto& a = model.store.entry(i);
        const auto& b = loaded.store.entry(i);
        CHECK(a.name == b.name);
        REQUIRE(a.value.same_shape(b.value));
        CHECK(std::memcmp(a.value.data(), b.value.data(),
                          sizeof(float) * static_cast<std::size_t>(a.value.size())) == 0);
    }

    // saving the loaded model reproduces the file byte for byte
    const std::string path2 = (tmp.path / "m2.ckpt").string();
    wsr::save_checkpoint(path2, loaded);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());
}

TEST_CASE("corrupted checkpoints are rejected") {
    TmpDir tmp;
    ModelConfig cfg = ModelConfig::toy();
    cfg.seed = 3;
    auto model = wsr::Model<float>::build(cfg);
    const std::string path = (tmp.path / "c.ckpt").string();
    wsr::save_checkpoint(path, model);

    auto read_all = [&]() {
        std::ifstream f(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    const std::string orig = read_all();

    auto write_all = [&](const std::string& name, const std::string& bytes) {
        const std::string p = (tmp.path / name).string();
        std::ofstream f(p, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        return p;
    };

    // flip one payload byte: checksum mismatch
    std::string flipped = orig;
    flipped[flipped.size() / 2] = static_cast<char>(flipped[flipped.size() / 2] ^ 0x40);
    CHECK_THROWS_AS(wsr::load_checkpoint(write_all("flip.ckpt", flipped)), wsr::CheckpointError);

    // truncate the file
    std::string trunc = orig.substr(0, orig.size() - 9);
    CHECK_THROWS_AS(wsr::load_checkpoint(write_all("trunc.ckpt", trunc)), wsr::CheckpointError);

    // wrong magic
    std::string magic = orig;
    magic[0] = 'X';
    CHECK_THROWS_AS(wsr::load_checkpoint(write_all("magic.ckpt", magic)), wsr::CheckpointError);

    // missing file is an I/O problem, not a format problem
    CHECK_THROWS_AS(wsr::load_checkpoint((tmp.path / "nope.ckpt").string()), wsr::IoError);

    // the pristine file still loads
    CHECK_NOTHROW(wsr::load_checkpoint(path));
}

TEST_CASE("same seed builds identical models, different seeds differ") {
    ModelConfig cfg = ModelConfig::toy();
    cfg.seed = 8;
    auto m1 = wsr::Model<float>::build(cfg);
    auto m2 = wsr::Model<float>::build(cfg);
    REQUIRE(m1.store.count() == m2.store.count());
    for (int i = 0; i < static_cast<int>(m1.store.count()); ++i)
        CHECK(wsr::max_abs_diff(m1.store.entry(i).value, m2.store.entry(i).value) == 0.0f);

    cfg.seed = 9;
    auto m3 = wsr::Model<float>::build(cfg);
    bool any_diff = false;
    for (int i = 0; i < static_cast<int>(m1.store.count()); ++i)
        if (wsr::max_abs_diff(m1.store.entry(i).value, m3.store.entry(i).value) > 0) any_diff = true;
    CHECK(any_diff);
}
