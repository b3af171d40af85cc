#ifndef BDL_RNG_HPP
#define BDL_RNG_HPP

#include <cstdint>
#include <random>

namespace bdl {

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Derive an independent stream from (seed, stream id). All per-block
// randomness flows through this so parallel or reordered blocks stay
// reproducible.
inline Rng split_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

}  // namespace bdl

#endif
