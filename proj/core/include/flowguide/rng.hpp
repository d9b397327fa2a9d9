#pragma once

#include <cmath>
#include <cstdint>

namespace flowguide {

/// Deterministic RNG used everywhere results must reproduce bit-exactly.
/// splitmix64 core with Box-Muller normals; unlike std::normal_distribution
/// the output sequence is pinned down across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1] (safe as a log argument).
    double uniform_pos() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    /// Independent child stream; used to give episodes their own RNGs.
    Rng fork(uint64_t stream) const {
        Rng r(state_ ^ (0xA0761D6478BD642Full + stream * 0xE7037ED1A0B428DBull));
        r.next_u64();
        return r;
    }

    static Rng for_episode(uint64_t master_seed, uint64_t episode_index) {
        return Rng(master_seed).fork(episode_index + 1);
    }

private:
    uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace flowguide
