#pragma once

#include <cstdint>
#include <string_view>

namespace proteus {

// 64-bit FNV-1a over the raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t basis = 0xcbf29ce484222325ULL) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Portable keyed string hash: mix64(fnv1a64(s) ^ mix64(seed)).
// Split assignment and feature hashing both use this, so results are stable
// across platforms and standard libraries.
constexpr std::uint64_t keyed_hash(std::string_view s, std::uint64_t seed) {
  return mix64(fnv1a64(s) ^ mix64(seed));
}

}  // namespace proteus
