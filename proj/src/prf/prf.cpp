#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <string>

#include "dpir/errors.hpp"
#include "dpir/prf.hpp"

namespace dpir {

std::string Seed::hex() const {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

namespace prf {

namespace detail {

void hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg,
                 std::span<std::uint8_t, 32> out) {
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(),
       out.data(), &len);
}

}  // namespace detail

namespace {

Seed expand_aes(const Seed& seed, unsigned child) {
  const auto key = seed.bytes();
  std::array<std::uint8_t, 16> block{};
  block[0] = static_cast<std::uint8_t>(child);
  std::array<std::uint8_t, 16> out{};
  detail::aes128_encrypt(key, block, out);
  return Seed::from_bytes(out);
}

Seed expand_chacha(const Seed& seed, unsigned child) {
  std::array<std::uint8_t, 32> key{};
  const auto s = seed.bytes();
  std::copy(s.begin(), s.end(), key.begin());
  static constexpr std::array<std::uint8_t, 12> kNonce{};
  std::array<std::uint8_t, 64> block{};
  detail::chacha20_block(key, child, kNonce, block);
  return Seed::from_bytes(std::span<const std::uint8_t, 16>(block.data(), 16));
}

Seed expand_hmac(const Seed& seed, unsigned child) {
  const auto key = seed.bytes();
  const std::uint8_t msg = static_cast<std::uint8_t>(child);
  std::array<std::uint8_t, 32> mac{};
  detail::hmac_sha256(key, std::span<const std::uint8_t>(&msg, 1), mac);
  return Seed::from_bytes(std::span<const std::uint8_t, 16>(mac.data(), 16));
}

// 64-bit hashes are widened by hashing message bytes 2c and 2c+1.
Seed expand_siphash(const Seed& seed, unsigned child) {
  const auto key = seed.bytes();
  const std::uint8_t m0 = static_cast<std::uint8_t>(2 * child);
  const std::uint8_t m1 = static_cast<std::uint8_t>(2 * child + 1);
  return Seed{detail::siphash24(key, std::span<const std::uint8_t>(&m0, 1)),
              detail::siphash24(key, std::span<const std::uint8_t>(&m1, 1))};
}

Seed expand_highway(const Seed& seed, unsigned child) {
  const std::array<std::uint64_t, 4> key{seed.lo, seed.hi, 0, 0};
  const std::uint8_t m0 = static_cast<std::uint8_t>(2 * child);
  const std::uint8_t m1 = static_cast<std::uint8_t>(2 * child + 1);
  return Seed{detail::highwayhash64(key, std::span<const std::uint8_t>(&m0, 1)),
              detail::highwayhash64(key, std::span<const std::uint8_t>(&m1, 1))};
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(PrfId id) {
  switch (id) {
    case PrfId::Aes128Ctr: return "Aes128Ctr";
    case PrfId::Sha256Hmac: return "Sha256Hmac";
    case PrfId::ChaCha20: return "ChaCha20";
    case PrfId::SipHash: return "SipHash";
    case PrfId::HighwayHash: return "HighwayHash";
  }
  return "unknown";
}

PrfId parse_prf(std::string_view name) {
  const std::string n = lower(name);
  if (n == "aes128ctr" || n == "aes" || n == "aes128") return PrfId::Aes128Ctr;
  if (n == "sha256hmac" || n == "sha256" || n == "hmac") return PrfId::Sha256Hmac;
  if (n == "chacha20" || n == "chacha") return PrfId::ChaCha20;
  if (n == "siphash") return PrfId::SipHash;
  if (n == "highwayhash" || n == "highway") return PrfId::HighwayHash;
  throw ConfigError("unknown PRF '" + std::string(name) + "'");
}

PrfId prf_from_byte(std::uint8_t b) {
  if (b > static_cast<std::uint8_t>(PrfId::HighwayHash)) {
    throw ConfigError("unknown PRF id " + std::to_string(b));
  }
  return static_cast<PrfId>(b);
}

Seed expand(PrfId id, const Seed& seed, unsigned child) {
  switch (id) {
    case PrfId::Aes128Ctr: return expand_aes(seed, child & 1u);
    case PrfId::Sha256Hmac: return expand_hmac(seed, child & 1u);
    case PrfId::ChaCha20: return expand_chacha(seed, child & 1u);
    case PrfId::SipHash: return expand_siphash(seed, child & 1u);
    case PrfId::HighwayHash: return expand_highway(seed, child & 1u);
  }
  throw ConfigError("unknown PRF id");
}

}  // namespace prf
}  // namespace dpir
