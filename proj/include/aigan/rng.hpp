#pragma once

#include <cmath>
#include <cstdint>

#include "aigan/tensor.hpp"

namespace aigan {

// xoshiro256** seeded through splitmix64. Self-contained so that streams are
// reproducible across standard libraries, not just across runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        spare_valid_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

    // [0, 1), 24-bit mantissa resolution
    float uniform() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // standard normal, Box-Muller with cached spare
    float normal() {
        if (spare_valid_) {
            spare_valid_ = false;
            return spare_;
        }
        float u1 = uniform();
        while (u1 <= 1e-12f) u1 = uniform();
        const float u2 = uniform();
        const float r = std::sqrt(-2.0f * std::log(u1));
        const float a = 6.28318530717958647692f * u2;
        spare_ = r * std::sin(a);
        spare_valid_ = true;
        return r * std::cos(a);
    }

    // uniform integer in [0, n)
    int below(int n) {
        return static_cast<int>((static_cast<std::uint64_t>(next_u32()) *
                                 static_cast<std::uint64_t>(n)) >> 32);
    }

    // Independent stream derived from the original seed; does not consume
    // state from this generator.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t x = seed_ ^ (0x9e3779b97f4a7c15ULL + stream * 0xbf58476d1ce4e5b9ULL);
        return Rng(splitmix64(x));
    }

    std::uint64_t seed() const { return seed_; }

    void fill_uniform(Tensor& t, float lo, float hi) {
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    }

    void fill_normal(Tensor& t, float mean, float stddev) {
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = mean + stddev * normal();
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_;
    std::uint64_t s_[4];
    float spare_ = 0.0f;
    bool spare_valid_ = false;
};

} // namespace aigan
