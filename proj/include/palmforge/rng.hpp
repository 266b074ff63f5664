#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace palmforge {

// Deterministic PRNG used everywhere instead of <random> distributions:
// std::uniform_*_distribution / std::normal_distribution are
// implementation-defined, which would break the bit-identical-output
// guarantees across toolchains. xoshiro256++ seeded via splitmix64.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound) without modulo bias (Lemire + rejection).
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) return 0;
        while (true) {
            std::uint64_t x = next_u64();
            __uint128_t m = static_cast<__uint128_t>(x) * bound;
            auto low = static_cast<std::uint64_t>(m);
            if (low >= bound || low >= (0 - bound) % bound)
                return static_cast<std::uint64_t>(m >> 64);
        }
    }

    // Standard normal via the Marsaglia polar method (sqrt/log only; no
    // trig, and no libstdc++ distribution state).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double factor = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * factor;
        has_spare_ = true;
        return u * factor;
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

namespace detail {

inline std::uint64_t fnv1a_accumulate(std::uint64_t h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

// Labeled seed fan-out: one master seed deterministically spawns independent
// streams, e.g. derive_seed(master, "refill") or
// derive_seed(master, "deform", identity_index, pair_index).
template <typename... Index>
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, Index... indices) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = detail::fnv1a_accumulate(h, &seed, sizeof(seed));
    h = detail::fnv1a_accumulate(h, label.data(), label.size());
    (
        [&] {
            auto v = static_cast<std::uint64_t>(indices);
            h = detail::fnv1a_accumulate(h, &v, sizeof(v));
        }(),
        ...);
    // splitmix finalizer decorrelates nearby FNV outputs
    return Rng::splitmix64(h);
}

} // namespace palmforge
