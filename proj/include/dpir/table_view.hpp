#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>

namespace dpir {

static_assert(std::endian::native == std::endian::little,
              "row words are reinterpreted as little-endian bytes");

// Read-only row-major view of fixed-width rows stored as 64-bit words.
struct TableView {
  const std::uint64_t* data = nullptr;
  std::size_t rows = 0;
  std::size_t row_words = 0;

  std::span<const std::uint64_t> row(std::size_t j) const {
    return {data + j * row_words, row_words};
  }
  std::size_t row_bytes() const { return row_words * 8; }

  TableView slice(std::size_t first, std::size_t count) const {
    return {data + first * row_words, count, row_words};
  }
};

// acc ^= row when `select` is set. Branch-free.
inline void masked_xor(std::span<std::uint64_t> acc, std::span<const std::uint64_t> row,
                       bool select) {
  const std::uint64_t mask = std::uint64_t{0} - static_cast<std::uint64_t>(select);
  for (std::size_t w = 0; w < acc.size(); ++w) acc[w] ^= row[w] & mask;
}

inline void xor_into(std::span<std::uint64_t> acc, std::span<const std::uint64_t> other) {
  for (std::size_t w = 0; w < acc.size(); ++w) acc[w] ^= other[w];
}

}  // namespace dpir
