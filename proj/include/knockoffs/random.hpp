#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace knockoffs {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used as a counter-based hash to derive independent
// stream seeds from (base seed, replication, stream tag) tuples.
std::uint64_t splitmix64(std::uint64_t x);

// seed' = mix(...mix(mix(base) ^ key_1) ^ key_2 ...). Each key is mixed in
// sequence so (1, 2) and (2, 1) give different streams.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

// Stream tags. Each independent use of randomness inside a replication
// draws from its own tagged stream so results do not depend on which other
// methods ran.
namespace stream {
inline constexpr std::uint64_t data = 0x64617461;
inline constexpr std::uint64_t cv_target = 0x74677420;
inline constexpr std::uint64_t cv_external = 0x65787420;
inline constexpr std::uint64_t cv_pooled = 0x706f6f6c;
inline constexpr std::uint64_t cv_weighted = 0x776c6173;
inline constexpr std::uint64_t cv_weighted_pooled = 0x776c706c;
}  // namespace stream

}  // namespace knockoffs
