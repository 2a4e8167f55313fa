#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sv/error.hpp"

namespace sv {

/* splitmix64 stepper; also used standalone to seed xoshiro and to derive
 * per-tensor weight streams. */
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/* xoshiro256** seeded via splitmix64(seed), four successive outputs.
 *
 * Reference vectors (frozen, see README and test_kernels):
 *   state {1,2,3,4} -> 11520, 0, 1509978240, 1215971899390074240, ...
 *   seed 0   -> 0x99ec5f36cb75f2b4, 0xbf6e1f784956452a, 0x1a5f849d4933e6e0
 *   seed 42  -> 0x15780b2e0c2ec716, 0x6104d9866d113a7e, 0xae17533239e499a1
 *
 * uniform() maps the top 53 bits to [0,1): (x >> 11) * 2^-53.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& lane : s_) lane = splitmix64_next(sm);
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

    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /* Uniform float in [lo, hi); consumes one u64. */
    float uniform_float(float lo, float hi) {
        return lo + float(uniform()) * (hi - lo);
    }

    /* CDF-walk categorical draw over a probability vector; consumes one u64.
     * Falls back to the last positive-mass index if rounding leaves
     * u above the accumulated total. */
    int sample(std::span<const float> probs) {
        if (probs.empty()) throw ConfigError("sample: empty distribution");
        const double u = uniform();
        double cum = 0.0;
        int last_positive = -1;
        for (int i = 0; i < int(probs.size()); ++i) {
            if (probs[i] > 0.0f) last_positive = i;
            cum += double(probs[i]);
            if (u < cum) return i;
        }
        if (last_positive < 0) throw LogicError("sample: zero-mass distribution");
        return last_positive;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
};

} // namespace sv
