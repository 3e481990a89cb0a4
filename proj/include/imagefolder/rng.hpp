#pragma once

// Counter-based Philox4x32-10 generator (Salmon et al., Random123). The
// whole state is (key, counter), so streams are reproducible across
// platforms, cheap to checkpoint, and any draw can be addressed directly by
// its counter for order-independent parallel sampling.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace imagefolder {

using PhiloxBlock = std::array<std::uint32_t, 4>;

inline PhiloxBlock philox4x32_10(PhiloxBlock ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += W0;
            key[1] += W1;
        }
        const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

struct RngState {
    std::uint64_t key = 0;
    std::uint64_t counter = 0;
    friend bool operator==(const RngState&, const RngState&) = default;
};

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_{seed, 0} {}
    explicit Rng(RngState s) : state_(s) {}

    RngState state() const { return state_; }
    std::uint64_t seed() const { return state_.key; }

    /// Draw addressed by (counter, lane) without touching the sequential stream.
    std::uint64_t u64_at(std::uint64_t counter, std::uint32_t lane = 0) const {
        const PhiloxBlock out = philox4x32_10(
            {static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32), lane, 0x5eed5eedu},
            {static_cast<std::uint32_t>(state_.key), static_cast<std::uint32_t>(state_.key >> 32)});
        return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    }

    double uniform_at(std::uint64_t counter, std::uint32_t lane = 0) const {
        return static_cast<double>(u64_at(counter, lane) >> 11) * 0x1.0p-53;
    }

    std::uint64_t next_u64() { return u64_at(state_.counter++, 0); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [0, n) by rejection; n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r < limit) return r % n;
        }
    }

    /// Standard normal via Box-Muller (one value per two uniforms).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Independent child stream whose key is derived from this key and `stream`.
    Rng split(std::uint64_t stream) const {
        const PhiloxBlock out = philox4x32_10(
            {static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0xa5a5a5a5u, 0x3c3c3c3cu},
            {static_cast<std::uint32_t>(state_.key), static_cast<std::uint32_t>(state_.key >> 32)});
        return Rng((static_cast<std::uint64_t>(out[1]) << 32) | out[0]);
    }

private:
    RngState state_;
};

}  // namespace imagefolder
