#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rwpcl {

using Rng = std::mt19937_64;

// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// All randomness derives from one master seed: child = master XOR fnv1a(name),
/// passed through splitmix64 so neighbouring names give unrelated streams.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view name) noexcept {
  return splitmix64(master ^ fnv1a(name));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(master ^ index);
}

}  // namespace rwpcl
