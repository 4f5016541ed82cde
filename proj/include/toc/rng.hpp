#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace toc {

// Splittable counter-based PRNG (splitmix64 core). Streams derived via
// split() are independent of draw order in the parent, which is what keeps
// per-block calibration and per-epsilon search runs order-independent.
class Rng {
public:
    explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull) : state_(mix(seed)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Derive an independent stream keyed by a tag; the parent state is not
    // consumed.
    Rng split(uint64_t tag) const { return Rng(mix(state_ ^ mix(tag ^ 0xa0761d6478bd642full))); }

    Rng split(std::string_view tag) const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        return split(h);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; one value per call, cache the pair.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdull;
        z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
        return z ^ (z >> 33);
    }

    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace toc
