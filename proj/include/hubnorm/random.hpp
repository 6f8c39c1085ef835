#pragma once

#include <cstdint>
#include <random>

namespace hubnorm {

/// splitmix64 finalizer; used to derive independent engine seeds from
/// (seed, stream, counter) so chunks can be generated in any order.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) {
  return mix_seed(mix_seed(mix_seed(seed) ^ stream) ^ counter);
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) {
  return Engine(derive_seed(seed, stream, counter));
}

}  // namespace hubnorm
