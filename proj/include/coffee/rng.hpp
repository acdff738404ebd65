#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace coffee {

// 64-bit FNV-1a. Stable across platforms; used for cache keys and stream names.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Independent generator for one named purpose ("world", "events", ...), so
// consuming draws in one stream never shifts another.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view purpose) {
  const std::uint64_t tag = fnv1a(purpose);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace coffee
