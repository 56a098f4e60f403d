#pragma once

#include <cstdint>
#include <random>

#include "sblpn/specfun.hpp"

namespace sblpn {

/// Uniform draw on the open interval (0, 1) from 53 random bits.
inline double uniform_open01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n01;
  return n01(rng);
}

/// Per-chain stream seeding. Mixes the seed so nearby seeds give unrelated streams.
inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x5eedu};
  return Rng(seq);
}

}  // namespace sblpn
