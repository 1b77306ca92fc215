#pragma once

#include "pcis/types.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace pcis {

/// splitmix64 step; good enough to decorrelate derived seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

/// Named-stream generator factory. Every source of randomness in a run is a
/// stream derived from (master_seed, name), so environment stepping, learner
/// exploration, grow rollouts and certification rollouts are independent by
/// construction and replays are deterministic.
class RngStreams {
public:
    explicit RngStreams(std::uint64_t master_seed) : master_(master_seed) {}

    Rng stream(const std::string& name) const {
        std::uint64_t s = master_ ^ fnv1a64(name);
        // two mixing rounds so adjacent master seeds do not produce
        // correlated low bits
        splitmix64(s);
        return Rng(splitmix64(s));
    }

    std::uint64_t master() const { return master_; }

private:
    std::uint64_t master_;
};

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi_inclusive) {
    return std::uniform_int_distribution<int>(lo, hi_inclusive)(rng);
}

} // namespace pcis
