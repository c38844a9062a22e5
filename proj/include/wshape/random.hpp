#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace wshape {

/// SplitMix64 finalizer; used to fold stream keys into engine seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// FNV-1a, for turning stream labels such as "template" into key words.
constexpr std::uint64_t label_key(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : label) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// A random engine keyed by (seed, k1, k2, ...). Streams with different keys
/// are independent, and a stream's output does not depend on which other
/// streams were drawn before it, so parallel generation is reproducible.
inline std::mt19937_64 keyed_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t state = mix64(seed);
  for (std::uint64_t k : keys) state = mix64(state ^ mix64(k));
  std::seed_seq seq{static_cast<std::uint32_t>(state), static_cast<std::uint32_t>(state >> 32),
                    static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

} // namespace wshape
