// Portable HighwayHash (64-bit output), following the reference C layout.
#include <array>

#include "dpir/prf.hpp"

namespace dpir::prf::detail {
namespace {

using Lanes = std::array<std::uint64_t, 4>;

struct HighwayState {
  Lanes v0, v1, mul0, mul1;

  explicit HighwayState(std::span<const std::uint64_t, 4> key) {
    mul0 = {0xdbe6d5d5fe4cce2fULL, 0xa4093822299f31d0ULL, 0x13198a2e03707344ULL,
            0x243f6a8885a308d3ULL};
    mul1 = {0x3bd39e10cb0ef593ULL, 0xc0acf169b5f18a8cULL, 0xbe5466cf34e90c6cULL,
            0x452821e638d01377ULL};
    for (int i = 0; i < 4; ++i) {
      v0[i] = mul0[i] ^ key[i];
      v1[i] = mul1[i] ^ ((key[i] >> 32) | (key[i] << 32));
    }
  }

  static void zipper_merge_add(std::uint64_t v1, std::uint64_t v0, std::uint64_t& add1,
                               std::uint64_t& add0) {
    add0 += (((v0 & 0xff000000ULL) | (v1 & 0xff00000000ULL)) >> 24) |
            (((v0 & 0xff0000000000ULL) | (v1 & 0xff000000000000ULL)) >> 16) |
            (v0 & 0xff0000ULL) | ((v0 & 0xff00ULL) << 32) |
            ((v1 & 0xff00000000000000ULL) >> 8) | (v0 << 56);
    add1 += (((v1 & 0xff000000ULL) | (v0 & 0xff00000000ULL)) >> 24) |
            (v1 & 0xff0000ULL) | ((v1 & 0xff0000000000ULL) >> 16) |
            ((v1 & 0xff00ULL) << 24) | ((v0 & 0xff000000000000ULL) >> 8) |
            ((v1 & 0xffULL) << 48) | (v0 & 0xff00000000000000ULL);
  }

  void update(const Lanes& lanes) {
    for (int i = 0; i < 4; ++i) {
      v1[i] += mul0[i] + lanes[i];
      mul0[i] ^= (v1[i] & 0xffffffffULL) * (v0[i] >> 32);
      v0[i] += mul1[i];
      mul1[i] ^= (v0[i] & 0xffffffffULL) * (v1[i] >> 32);
    }
    zipper_merge_add(v1[1], v1[0], v0[1], v0[0]);
    zipper_merge_add(v1[3], v1[2], v0[3], v0[2]);
    zipper_merge_add(v0[1], v0[0], v1[1], v1[0]);
    zipper_merge_add(v0[3], v0[2], v1[3], v1[2]);
  }

  void update_packet(const std::uint8_t* p) {
    Lanes lanes{};
    for (int i = 0; i < 4; ++i) {
      for (int b = 7; b >= 0; --b) lanes[i] = (lanes[i] << 8) | p[8 * i + b];
    }
    update(lanes);
  }

  void update_remainder(const std::uint8_t* bytes, std::size_t size_mod32) {
    const std::size_t size_mod4 = size_mod32 & 3;
    const std::uint8_t* remainder = bytes + (size_mod32 & ~std::size_t{3});
    std::uint8_t packet[32] = {};
    for (auto& v : v0) v += (std::uint64_t{size_mod32} << 32) + size_mod32;
    const auto count = static_cast<unsigned>(size_mod32);
    for (auto& lane : v1) {
      const auto half0 = static_cast<std::uint32_t>(lane);
      const auto half1 = static_cast<std::uint32_t>(lane >> 32);
      const std::uint32_t r0 = (half0 << count) | (half0 >> (32 - count));
      const std::uint32_t r1 = (half1 << count) | (half1 >> (32 - count));
      lane = std::uint64_t{r0} | (std::uint64_t{r1} << 32);
    }
    for (std::ptrdiff_t i = 0; i < remainder - bytes; ++i) packet[i] = bytes[i];
    if (size_mod32 & 16) {
      for (int i = 0; i < 4; ++i) packet[28 + i] = remainder[i + size_mod4 - 4];
    } else if (size_mod4 != 0) {
      packet[16] = remainder[0];
      packet[17] = remainder[size_mod4 >> 1];
      packet[18] = remainder[size_mod4 - 1];
    }
    update_packet(packet);
  }

  std::uint64_t finalize64() {
    for (int round = 0; round < 4; ++round) {
      Lanes permuted{};
      permuted[0] = (v0[2] >> 32) | (v0[2] << 32);
      permuted[1] = (v0[3] >> 32) | (v0[3] << 32);
      permuted[2] = (v0[0] >> 32) | (v0[0] << 32);
      permuted[3] = (v0[1] >> 32) | (v0[1] << 32);
      update(permuted);
    }
    return v0[0] + v1[0] + mul0[0] + mul1[0];
  }
};

}  // namespace

std::uint64_t highwayhash64(std::span<const std::uint64_t, 4> key,
                            std::span<const std::uint8_t> msg) {
  HighwayState state(key);
  const std::size_t full = msg.size() & ~std::size_t{31};
  for (std::size_t i = 0; i < full; i += 32) state.update_packet(msg.data() + i);
  const std::size_t rest = msg.size() & 31;
  if (rest != 0) state.update_remainder(msg.data() + full, rest);
  return state.finalize64();
}

}  // namespace dpir::prf::detail
