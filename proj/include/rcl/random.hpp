#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rcl {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a list of keys
/// (stage tag, iteration, sample index, ...). The result depends only on the
/// values, never on call order, so per-sample streams are schedule-free.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k));
  return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(master, keys));
}

// Stream tags so different consumers of one master seed never collide.
namespace stream {
inline constexpr std::uint64_t kMode = 0x6d6f6465;     // "mode"
inline constexpr std::uint64_t kShuffle = 0x73687566;  // "shuf"
inline constexpr std::uint64_t kAugment = 0x61756720;  // "aug "
inline constexpr std::uint64_t kInit = 0x696e6974;     // "init"
inline constexpr std::uint64_t kBlobs = 0x626c6f62;    // "blob"
inline constexpr std::uint64_t kTeacher = 0x74636872;  // "tchr"
}  // namespace stream

}  // namespace rcl
