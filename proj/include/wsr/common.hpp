#pragma once

// Shared plumbing: error taxonomy, thread-count control, hashing and the
// deterministic RNG used everywhere a distribution is drawn.  std::mt19937 and
// std::uniform_* are avoided on purpose: the standard leaves distribution
// algorithms implementation-defined, and byte-identical runs across platforms
// are a hard requirement here.

#include <atomic>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace wsr {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Global worker count for the parallel kernels.  1 selects the serial path.
// Every kernel computes each output element in a fixed arithmetic order, so
// results are byte-identical at any setting; this only trades wall time.
inline std::atomic<int>& thread_count_ref() {
    static std::atomic<int> n{1};
    return n;
}
inline int thread_count() { return thread_count_ref().load(std::memory_order_relaxed); }
inline void set_thread_count(int n) {
    if (n < 1) throw ConfigError("thread count must be >= 1");
    thread_count_ref().store(n, std::memory_order_relaxed);
}

// SplitMix64, used to expand one seed into independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed + 0x632be59bd9b4e019ull * (stream + 1);
    return splitmix64(s);
}

// PCG32 (O'Neill), fixed increment variant.  Small, fast, reproducible.
class Pcg32 {
  public:
    explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ull + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Unbiased integer in [0, bound) via rejection (Lemire-style threshold).
    std::uint32_t next_below(std::uint32_t bound) {
        if (bound == 0) throw NumericError("next_below: bound must be positive");
        std::uint32_t threshold = static_cast<std::uint32_t>(-bound) % bound;
        for (;;) {
            std::uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform in [0,1), 53 random bits, exactly representable in a double.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo,hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  private:
    std::uint64_t state_;
    std::uint64_t inc_;
};

// FNV-1a 64-bit, used for checkpoint integrity.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace wsr
