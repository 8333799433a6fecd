#include "wsr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace wsr {
namespace {

constexpr char kMagic[8] = {'W', 'S', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

struct ByteSink {
    std::vector<unsigned char> bytes;
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
};

struct ByteSource {
    const unsigned char* p;
    std::size_t left;
    void raw(void* out, std::size_t n) {
        if (n > left) throw CheckpointError("checkpoint truncated");
        std::memcpy(out, p, n);
        p += n;
        left -= n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, 8);
        return v;
    }
    std::string str(std::size_t n) {
        if (n > left) throw CheckpointError("checkpoint truncated");
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& m) {
    ByteSink out;
    out.raw(kMagic, 8);
    out.u32(kVersion);
    const std::string cfg = m.cfg.to_text();
    out.u64(cfg.size());
    out.raw(cfg.data(), cfg.size());
    out.u64(m.train_steps);
    out.u32(static_cast<std::uint32_t>(m.store.count()));
    for (const auto& e : m.store.entries()) {
        out.u32(static_cast<std::uint32_t>(e.name.size()));
        out.raw(e.name.data(), e.name.size());
        out.u32(static_cast<std::uint32_t>(e.value.rank()));
        for (std::int64_t d = 0; d < e.value.rank(); ++d)
            out.u64(static_cast<std::uint64_t>(e.value.dim(d)));
        out.raw(e.value.data(), sizeof(float) * static_cast<std::size_t>(e.value.size()));
    }
    out.u64(fnv1a64(out.bytes.data(), out.bytes.size()));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.bytes.data()),
            static_cast<std::streamsize>(out.bytes.size()));
    if (!f) throw IoError("short write to checkpoint: " + path);
}

Model<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for reading: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failure on checkpoint: " + path);

    if (bytes.size() < 8 + 4 + 8) throw CheckpointError("checkpoint too small to be valid");
    const std::uint64_t want = fnv1a64(bytes.data(), bytes.size() - 8);
    std::uint64_t got;
    std::memcpy(&got, bytes.data() + bytes.size() - 8, 8);
    if (want != got) throw CheckpointError("checkpoint checksum mismatch");

    ByteSource in{bytes.data(), bytes.size() - 8};
    char magic[8];
    in.raw(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError("bad checkpoint magic");
    const std::uint32_t version = in.u32();
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    const std::uint64_t cfg_len = in.u64();
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_text(in.str(cfg_len));
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
    }
    if (cfg.precision != "f32") throw CheckpointError("checkpoint precision must be f32");

    Model<float> m = Model<float>::build(cfg);
    m.train_steps = in.u64();

    const std::uint32_t n = in.u32();
    if (n != static_cast<std::uint32_t>(m.store.count()))
        throw CheckpointError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        auto& e = m.store.entry(i);
        const std::uint32_t name_len = in.u32();
        const std::string name = in.str(name_len);
        if (name != e.name)
            throw CheckpointError("checkpoint parameter name mismatch: expected " + e.name +
                                  ", found " + name);
        const std::uint32_t rank = in.u32();
        if (rank != static_cast<std::uint32_t>(e.value.rank()))
            throw CheckpointError("checkpoint rank mismatch for " + name);
        for (std::uint32_t d = 0; d < rank; ++d)
            if (in.u64() != static_cast<std::uint64_t>(e.value.dim(d)))
                throw CheckpointError("checkpoint shape mismatch for " + name);
        in.raw(e.value.data(), sizeof(float) * static_cast<std::size_t>(e.value.size()));
        e.value.check_finite(("checkpoint parameter " + name).c_str());
    }
    if (in.left != 0) throw CheckpointError("checkpoint has trailing bytes");
    return m;
}

}  // namespace wsr
