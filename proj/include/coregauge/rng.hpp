#pragma once

#include <cstdint>

namespace coregauge::rng {

// Stateless, counter-based randomness. Every random quantity in the library
// is a pure function of (seed, role, agent, coordinate), so results do not
// depend on iteration order or on how work is split across threads.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum class Role : std::uint64_t {
  kEpsilon = 1,  // employer productivity w.r.t. a worker type
  kEta = 2,      // worker productivity w.r.t. an employer type
  kCloud = 3,    // stand-alone hypercube point clouds
  kTrial = 4,    // per-trial seed derivation
  kResample = 5, // reseeding after a degenerate draw
};

inline constexpr std::uint64_t stream_key(Role role, std::uint64_t a,
                                          std::uint64_t c) noexcept {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(role));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (c * 0xD1B54A32D192ED03ULL));
  return h;
}

inline constexpr std::uint64_t draw_bits(std::uint64_t seed, Role role,
                                         std::uint64_t a,
                                         std::uint64_t c) noexcept {
  return splitmix64(seed ^ stream_key(role, a, c));
}

// Uniform double in [0, 1) with 53 random bits.
inline constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline constexpr double uniform(std::uint64_t seed, Role role, std::uint64_t a,
                                std::uint64_t c) noexcept {
  return to_unit(draw_bits(seed, role, a, c));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, Role role,
                                           std::uint64_t a,
                                           std::uint64_t b) noexcept {
  return draw_bits(seed, role, a, b);
}

}  // namespace coregauge::rng
