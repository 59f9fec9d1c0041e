#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace ecl {

/// Counter-free splitmix64 generator. All randomness in the lab flows from
/// one experiment seed through named substreams (see stream tags at the use
/// sites), so runs reproduce bit-for-bit on any IEEE-754 platform without
/// relying on std:: distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// splitmix64 finalizer; also used to derive substream seeds.
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Seed for a named substream of `seed`. Extra indices (epoch, class)
    /// fold in one at a time.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
        return mix(seed ^ mix(tag));
    }
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
        return mix(derive(seed, tag) ^ mix(index));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n), rejection sampled (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller; the spare value is cached, so draws
    /// come in deterministic pairs.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Fisher-Yates shuffle driven by the portable generator above.
template <typename T>
void fisher_yates_shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace ecl
