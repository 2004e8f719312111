#ifndef SPILLSC_RNG_HPP
#define SPILLSC_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace spillsc {

using rng_engine = std::mt19937_64;

// splitmix64 finalizer: bijective 64-bit mix with strong avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a over the bytes of a label; used to give experiment cells stable ids.
inline std::uint64_t hash_label(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Splittable counter scheme: the derived seed depends only on
// (master, stream, index), never on draw order, so replications can be
// distributed across threads in any order and still reproduce exactly.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index) {
  return mix64(mix64(master ^ mix64(stream)) ^ index);
}

}  // namespace spillsc

#endif
