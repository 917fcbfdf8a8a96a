#pragma once

#include <array>
#include <cstdint>

namespace irregular_sde {

// Philox-4x32-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3", SC 2011). A 128-bit counter plus a 64-bit
// key map to 128 output bits; distinct counters give independent draws, so
// a stream can be indexed by (seed, path, cell) with no mutable state.
namespace philox {

inline constexpr std::uint32_t kW32A = 0x9E3779B9u;
inline constexpr std::uint32_t kW32B = 0xBB67AE85u;
inline constexpr std::uint32_t kM4x32A = 0xD2511F53u;
inline constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline std::array<std::uint32_t, 4> block(std::uint64_t key,
                                          std::array<std::uint32_t, 4> ctr) {
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM4x32A) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM4x32B) * ctr[2];
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    if (round < 9) {
      k0 += kW32A;
      k1 += kW32B;
    }
  }
  return ctr;
}

}  // namespace philox

// One uniform in the open interval (0,1) per (key, stream, cell) triple.
// The top 53 bits of the first two output words form the mantissa; the
// 2^-54 offset keeps the result strictly inside (0,1).
inline double counter_uniform(std::uint64_t key, std::uint64_t stream,
                              std::uint64_t cell) {
  const auto out = philox::block(
      key, {static_cast<std::uint32_t>(stream),
            static_cast<std::uint32_t>(stream >> 32),
            static_cast<std::uint32_t>(cell),
            static_cast<std::uint32_t>(cell >> 32)});
  const std::uint64_t bits =
      (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  return static_cast<double>(bits >> 11) * 0x1p-53 + 0x1p-54;
}

}  // namespace irregular_sde
