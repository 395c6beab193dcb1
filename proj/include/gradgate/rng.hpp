#pragma once

#include <cstdint>
#include <cmath>

namespace gradgate {

// Deterministic PRNG (splitmix64). The standard-library distributions are
// implementation-defined, so every random draw in the project goes through
// this class to keep generated datasets and initialized weights bit-identical
// across platforms and compilers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 24 bits of mantissa so the value is exact in float.
    float next_float() {
        return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
    }

    float next_float(float lo, float hi) {
        return lo + (hi - lo) * next_float();
    }

    // Standard normal via Box-Muller (cosine branch only; two uniforms per
    // draw, no cached state, so the stream is position-independent).
    float next_normal() {
        float u1 = next_float();
        float u2 = next_float();
        if (u1 < 1e-12f) u1 = 1e-12f;
        const float two_pi = 6.28318530717958647692f;
        return std::sqrt(-2.0f * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Uniform integer in [lo, hi] inclusive.
    int next_int(int lo, int hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Derive an independent stream seed from a base seed and a stream tag.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

} // namespace gradgate
