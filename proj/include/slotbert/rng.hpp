#pragma once

#include <cmath>
#include <cstdint>

namespace slotbert {

// Counter-based PRNG (SplitMix64 core). Self-contained so that datasets,
// parameter init and slot sampling are bit-reproducible across platforms,
// independent of libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_int(uint64_t n) {
        // multiply-shift; bias is negligible for n << 2^64 and irrelevant here,
        // but keep a rejection loop so small ranges are exact
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // standard normal via Box-Muller (no cached spare: keeps state = 1 u64)
    double gaussian() {
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    // independent stream derived from (seed, stream id)
    static Rng derive(uint64_t seed, uint64_t stream) {
        Rng mixer(seed ^ (0x632be59bd9b4e019ULL * (stream + 1)));
        return Rng(mixer.next_u64());
    }

private:
    uint64_t state_;
};

} // namespace slotbert
