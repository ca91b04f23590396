#include <openssl/rand.h>

#include <algorithm>

#include "dpir/errors.hpp"
#include "dpir/prf.hpp"
#include "dpir/random.hpp"

namespace dpir {

std::uint64_t RandomSource::next_u64() {
  std::uint8_t b[8];
  fill(b);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

Seed RandomSource::next_seed() {
  std::array<std::uint8_t, 16> b{};
  fill(b);
  return Seed::from_bytes(b);
}

std::uint64_t RandomSource::uniform(std::uint64_t bound) {
  if (bound == 0) throw ConfigError("uniform: bound must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % bound;
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
}

SeededRandom::SeededRandom(std::uint64_t seed) {
  for (int i = 0; i < 8; ++i) key_[i] = static_cast<std::uint8_t>(seed >> (8 * i));
}

void SeededRandom::fill(std::span<std::uint8_t> out) {
  std::size_t pos = 0;
  while (pos < out.size()) {
    if (used_ == sizeof block_) {
      std::uint8_t nonce[12] = {};
      for (int i = 0; i < 8; ++i) nonce[4 + i] = static_cast<std::uint8_t>(stream_ >> (8 * i));
      prf::detail::chacha20_block(std::span<const std::uint8_t, 32>(key_), counter_,
                                  std::span<const std::uint8_t, 12>(nonce), block_);
      if (++counter_ == 0) ++stream_;
      used_ = 0;
    }
    const std::size_t n = std::min(out.size() - pos, sizeof block_ - used_);
    std::copy_n(block_ + used_, n, out.data() + pos);
    used_ += n;
    pos += n;
  }
}

}  // namespace dpir
