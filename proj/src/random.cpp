#include "knockoffs/random.hpp"

namespace knockoffs {

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + UINT64_C(0x9E3779B97F4A7C15);
  z = (z ^ (z >> 30)) * UINT64_C(0xBF58476D1CE4E5B9);
  z = (z ^ (z >> 27)) * UINT64_C(0x94D049BB133111EB);
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t state = splitmix64(base);
  for (std::uint64_t key : keys) state = splitmix64(state ^ key);
  return state;
}

Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(base, keys));
}

}  // namespace knockoffs
