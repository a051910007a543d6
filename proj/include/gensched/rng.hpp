#pragma once

// Deterministic, keyed random streams. Every consumer derives its own stream
// from (master seed, tag, indices...) so results never depend on evaluation
// order or thread count, and any trajectory can be replayed bit-exactly.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gensched {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// xoshiro256++ (Blackman & Vigna, public domain reference implementation).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
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

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
        const std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= bound) v = next_u64();
        return v % n;
    }

    // Standard normal via Box-Muller; second value cached per stream.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Gumbel(0,1).
    double gumbel() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -std::log(-std::log(u) + 1e-300);
    }

    // Index sampled from unnormalized nonnegative weights.
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("categorical: weights sum to zero");
        const double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.size() - 1;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Collision-resistant key mixing for stream derivation.
inline std::uint64_t mix_key(std::uint64_t seed) { return seed; }

template <typename... Rest>
std::uint64_t mix_key(std::uint64_t seed, std::uint64_t tag, Rest... rest) {
    std::uint64_t s = seed ^ (tag + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2));
    splitmix64(s);
    return mix_key(s, static_cast<std::uint64_t>(rest)...);
}

// Short stable tags for stream purposes (ASCII packed into u64).
constexpr std::uint64_t stream_tag(const char* name) {
    std::uint64_t v = 1469598103934665603ULL;  // FNV offset
    for (const char* p = name; *p; ++p) v = (v ^ static_cast<std::uint64_t>(*p)) * 1099511628211ULL;
    return v;
}

template <typename... Tags>
RngStream derive_stream(std::uint64_t seed, Tags... tags) {
    return RngStream(mix_key(seed, static_cast<std::uint64_t>(tags)...));
}

}  // namespace gensched
