#pragma once

#include <cstdint>
#include <span>

#include "dpir/seed.hpp"

namespace dpir {

// Entropy source for key generation, share vectors and dummy queries.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  std::uint64_t next_u64();
  Seed next_seed();
  // Uniform in [0, bound); bound > 0.
  std::uint64_t uniform(std::uint64_t bound);
};

// OS entropy through OpenSSL's DRBG.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

// Reproducible ChaCha20 keystream generator. For tests and simulations.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed);
  void fill(std::span<std::uint8_t> out) override;

 private:
  std::uint8_t key_[32] = {};
  std::uint32_t counter_ = 0;
  std::uint64_t stream_ = 0;
  std::uint8_t block_[64] = {};
  std::size_t used_ = 64;
};

}  // namespace dpir
