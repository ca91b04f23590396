#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dpir/prf.hpp"
#include "dpir/random.hpp"
#include "dpir/seed.hpp"
#include "dpir/table_view.hpp"

namespace dpir::dpf {

using prf::PrfId;

// Evaluation domain of L = 2^depth leaves.
class DomainSpec {
 public:
  // Throws ConfigError unless num_entries is a power of two >= 2.
  static DomainSpec for_entries(std::uint64_t num_entries);
  static DomainSpec for_depth(unsigned depth);

  std::uint64_t num_entries() const { return std::uint64_t{1} << depth_; }
  unsigned depth() const { return depth_; }

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;

 private:
  explicit DomainSpec(unsigned depth) : depth_(depth) {}
  unsigned depth_;
};

// One party's key. Both parties receive identical codewords and differ in
// the root seed; the root low bits always differ.
class DpfKey {
 public:
  static constexpr std::size_t kHeaderBytes = 24;
  static constexpr std::size_t kBytesPerLevel = 64;

  DpfKey(DomainSpec domain, PrfId prf, Seed root);

  const DomainSpec& domain() const { return domain_; }
  PrfId prf() const { return prf_; }
  const Seed& root() const { return root_; }

  // Codeword C_parity[child, level], level in 1..depth.
  const Seed& codeword(unsigned parity, unsigned child, unsigned level) const {
    return codewords_[index(parity, child, level)];
  }
  Seed& codeword(unsigned parity, unsigned child, unsigned level) {
    return codewords_[index(parity, child, level)];
  }

  // Child of a node at `level - 1`: PRF(parent, child) ^ C_{lsb(parent)}[child, level].
  Seed descend(prf::Expander& prf, const Seed& parent, unsigned level, unsigned child) const {
    return prf(parent, child) ^ codeword(parent.low_bit() ? 1u : 0u, child, level);
  }

  std::size_t serialized_size() const {
    return kHeaderBytes + kBytesPerLevel * domain_.depth();
  }

  friend bool operator==(const DpfKey&, const DpfKey&) = default;

 private:
  std::size_t index(unsigned parity, unsigned child, unsigned level) const {
    return (std::size_t{parity} * 2 + child) * domain_.depth() + (level - 1);
  }

  DomainSpec domain_;
  PrfId prf_;
  Seed root_;
  // Layout: C_0 row 0, C_0 row 1, C_1 row 0, C_1 row 1; each row has depth cells.
  std::vector<Seed> codewords_;
};

// Bit of index j consumed at `level` (1 = most significant).
inline unsigned path_bit(std::uint64_t j, unsigned depth, unsigned level) {
  return static_cast<unsigned>((j >> (depth - level)) & 1u);
}

// Client key generation; exactly 4 * depth PRF calls.
std::pair<DpfKey, DpfKey> gen(DomainSpec domain, PrfId prf, std::uint64_t target,
                              RandomSource& rng, prf::CallCounter* counter = nullptr);

// P(depth, j); exactly depth PRF calls.
Seed eval_point(const DpfKey& key, std::uint64_t j, prf::CallCounter* counter = nullptr);

// Reference level-order full-domain expansion; exactly 2L - 2 PRF calls.
std::vector<Seed> eval_full(const DpfKey& key, prf::CallCounter* counter = nullptr);

// XOR of the rows whose leaf share has its low bit set (unfused reference).
std::vector<std::uint64_t> select_rows(std::span<const Seed> leaves, const TableView& table);

std::vector<std::uint8_t> serialize_key(const DpfKey& key);
// Throws FormatError on bad magic, version, length or PRF id.
DpfKey deserialize_key(std::span<const std::uint8_t> bytes);
// Size the serialized key takes for a domain of 2^depth.
constexpr std::size_t key_bytes_for_depth(unsigned depth) {
  return DpfKey::kHeaderBytes + DpfKey::kBytesPerLevel * depth;
}

// Packed bit vector, bit j in word j / 64.
class BitVector {
 public:
  explicit BitVector(std::size_t bits = 0) : bits_(bits), words_((bits + 63) / 64) {}
  std::size_t size() const { return bits_; }
  bool get(std::size_t j) const { return (words_[j / 64] >> (j % 64)) & 1u; }
  void set(std::size_t j, bool v) {
    const std::uint64_t m = std::uint64_t{1} << (j % 64);
    words_[j / 64] = v ? (words_[j / 64] | m) : (words_[j / 64] & ~m);
  }
  std::span<std::uint64_t> words() { return words_; }
  std::span<const std::uint64_t> words() const { return words_; }
  BitVector operator^(const BitVector& o) const;
  friend bool operator==(const BitVector&, const BitVector&) = default;

 private:
  std::size_t bits_;
  std::vector<std::uint64_t> words_;
};

// Secret-shared one-hot vector: r1 uniform, r2 = r1 ^ e_target.
std::pair<BitVector, BitVector> naive_pir_shares(DomainSpec domain, std::uint64_t target,
                                                 RandomSource& rng);
// Server side of the naive scheme: XOR of rows selected by the share bits.
std::vector<std::uint64_t> naive_pir_answer(const BitVector& share, const TableView& table);

}  // namespace dpir::dpf
