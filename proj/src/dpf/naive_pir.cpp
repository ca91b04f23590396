#include <string>

#include "dpir/dpf.hpp"
#include "dpir/errors.hpp"

namespace dpir::dpf {

BitVector BitVector::operator^(const BitVector& o) const {
  if (o.bits_ != bits_) throw ConfigError("bit vector length mismatch");
  BitVector out(bits_);
  for (std::size_t w = 0; w < words_.size(); ++w) out.words_[w] = words_[w] ^ o.words_[w];
  return out;
}

std::pair<BitVector, BitVector> naive_pir_shares(DomainSpec domain, std::uint64_t target,
                                                 RandomSource& rng) {
  const std::uint64_t n = domain.num_entries();
  if (target >= n) throw RangeError("target " + std::to_string(target) + " outside domain");
  BitVector r1(n);
  auto words = r1.words();
  rng.fill(std::span<std::uint8_t>(reinterpret_cast<std::uint8_t*>(words.data()),
                                   words.size() * 8));
  if (n % 64 != 0) words.back() &= (std::uint64_t{1} << (n % 64)) - 1;
  BitVector r2 = r1;
  r2.set(target, !r1.get(target));
  return {std::move(r1), std::move(r2)};
}

std::vector<std::uint64_t> naive_pir_answer(const BitVector& share, const TableView& table) {
  if (share.size() != table.rows) throw ConfigError("share length does not match table rows");
  std::vector<std::uint64_t> acc(table.row_words, 0);
  for (std::size_t j = 0; j < table.rows; ++j) masked_xor(acc, table.row(j), share.get(j));
  return acc;
}

}  // namespace dpir::dpf
