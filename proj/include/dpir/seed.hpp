#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace dpir {

// A 128-bit node value. Byte order is little-endian: byte 0 is the low byte
// of `lo`, so the "low bit" of a node is bit 0 of byte 0.
struct Seed {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  static constexpr std::size_t kBytes = 16;

  constexpr bool low_bit() const { return (lo & 1u) != 0; }

  constexpr Seed& operator^=(const Seed& o) {
    lo ^= o.lo;
    hi ^= o.hi;
    return *this;
  }
  friend constexpr Seed operator^(Seed a, const Seed& b) { return a ^= b; }
  friend constexpr bool operator==(const Seed&, const Seed&) = default;

  std::array<std::uint8_t, kBytes> bytes() const {
    std::array<std::uint8_t, kBytes> out{};
    for (int i = 0; i < 8; ++i) {
      out[i] = static_cast<std::uint8_t>(lo >> (8 * i));
      out[8 + i] = static_cast<std::uint8_t>(hi >> (8 * i));
    }
    return out;
  }

  static Seed from_bytes(std::span<const std::uint8_t, kBytes> b) {
    Seed s;
    for (int i = 0; i < 8; ++i) {
      s.lo |= std::uint64_t{b[i]} << (8 * i);
      s.hi |= std::uint64_t{b[8 + i]} << (8 * i);
    }
    return s;
  }

  std::string hex() const;
};

// The nonzero value the two shares sum to at the target: 0^127 || 1.
inline constexpr Seed kBeta{1, 0};

}  // namespace dpir
