#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace occudiff {

// Deterministic random source. std::mt19937_64 output is pinned by the
// standard, and uniform/normal draws below avoid the distribution classes
// (whose algorithms differ between standard libraries), so a given seed
// produces the same stream on every platform.
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    uint32_t next_u32() { return static_cast<uint32_t>(engine_() >> 32); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(engine_() % span);
    }

    /// Standard normal via Box-Muller (two uniforms per pair, cached spare).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <class Scalar>
    void fill_normal(Scalar* out, size_t n) {
        for (size_t i = 0; i < n; ++i) out[i] = static_cast<Scalar>(normal());
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Labeled sub-seed derivation: every component draws its own stream from the
/// master seed, so execution order and thread count never change the bytes.
inline uint64_t sub_seed(uint64_t master, std::string_view label, uint64_t index = 0) {
    uint64_t h = 1469598103934665603ull;
    for (char c : label) {
        h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
        h *= 1099511628211ull;
    }
    return splitmix64(master ^ splitmix64(h ^ splitmix64(index)));
}

}  // namespace occudiff
