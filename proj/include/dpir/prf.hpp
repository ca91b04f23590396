#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "dpir/seed.hpp"

namespace dpir::prf {

enum class PrfId : std::uint8_t {
  Aes128Ctr = 0,
  Sha256Hmac = 1,
  ChaCha20 = 2,
  SipHash = 3,
  HighwayHash = 4,
};

inline constexpr PrfId kAllPrfs[] = {PrfId::Aes128Ctr, PrfId::Sha256Hmac,
                                     PrfId::ChaCha20, PrfId::SipHash,
                                     PrfId::HighwayHash};
inline constexpr PrfId kDefaultPrf = PrfId::Aes128Ctr;

std::string_view to_string(PrfId id);
// Accepts the enum spelling ("ChaCha20") or a lower-case short name
// ("chacha20", "aes", "sha256", "siphash", "highway"). Throws ConfigError.
PrfId parse_prf(std::string_view name);
// Throws ConfigError for byte values that are not a registered backend.
PrfId prf_from_byte(std::uint8_t b);

// Expands `seed` into the child selected by `child` (0 or 1). Pure; safe to
// call from any thread.
Seed expand(PrfId id, const Seed& seed, unsigned child);

// Exact count of expand() calls made through a counting path.
class CallCounter {
 public:
  void add(std::uint64_t n) { calls_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t value() const { return calls_.load(std::memory_order_relaxed); }
  void reset() { calls_.store(0, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> calls_{0};
};

// Backend handle used by the tree code. Counts into a local tally so hot
// loops do not touch the shared atomic; flush() publishes the tally.
class Expander {
 public:
  explicit Expander(PrfId id, CallCounter* sink = nullptr) : id_(id), sink_(sink) {}
  Expander(const Expander&) = delete;
  Expander& operator=(const Expander&) = delete;
  ~Expander() { flush(); }

  Seed operator()(const Seed& seed, unsigned child) {
    ++local_;
    return expand(id_, seed, child);
  }

  PrfId id() const { return id_; }
  std::uint64_t calls() const { return total_ + local_; }

  void flush() {
    total_ += local_;
    if (sink_ != nullptr && local_ != 0) sink_->add(local_);
    local_ = 0;
  }

 private:
  PrfId id_;
  CallCounter* sink_;
  std::uint64_t local_ = 0;
  std::uint64_t total_ = 0;
};

// Primitive entry points, exposed for known-answer tests and benchmarks.
namespace detail {
// AES-128 encryption of one block under a 16-byte key.
void aes128_encrypt(std::span<const std::uint8_t, 16> key,
                    std::span<const std::uint8_t, 16> in,
                    std::span<std::uint8_t, 16> out);
bool aes_hw_available();
// ChaCha20 (RFC 8439 layout) keystream block.
void chacha20_block(std::span<const std::uint8_t, 32> key, std::uint32_t counter,
                    std::span<const std::uint8_t, 12> nonce,
                    std::span<std::uint8_t, 64> out);
std::uint64_t siphash24(std::span<const std::uint8_t, 16> key,
                        std::span<const std::uint8_t> msg);
std::uint64_t highwayhash64(std::span<const std::uint64_t, 4> key,
                            std::span<const std::uint8_t> msg);
void hmac_sha256(std::span<const std::uint8_t> key,
                 std::span<const std::uint8_t> msg,
                 std::span<std::uint8_t, 32> out);
}  // namespace detail

}  // namespace dpir::prf
