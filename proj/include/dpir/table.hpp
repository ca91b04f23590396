#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dpir/dpf.hpp"
#include "dpir/table_view.hpp"

namespace dpir::table {

// L x D table of fixed-width entries. Rows beyond `logical_entries` pad the
// table to a power of two and are all zero.
class EmbeddingTable {
 public:
  static constexpr std::size_t kHeaderBytes = 32;

  // Zero-filled table. entry_bytes must be a positive multiple of 16.
  EmbeddingTable(std::uint32_t table_id, std::uint64_t logical_entries, std::uint32_t entry_bytes);

  std::uint32_t table_id() const { return table_id_; }
  std::uint64_t num_entries() const { return num_entries_; }
  std::uint64_t logical_entries() const { return logical_entries_; }
  std::uint32_t entry_bytes() const { return entry_bytes_; }
  bool padded() const { return num_entries_ != logical_entries_; }
  dpf::DomainSpec domain() const { return dpf::DomainSpec::for_entries(num_entries_); }

  std::span<const std::uint8_t> row(std::uint64_t j) const;
  std::span<std::uint8_t> mutable_row(std::uint64_t j);

  TableView view() const { return {words_.data(), num_entries_, entry_bytes_ / 8u}; }
  // Rows [bin * bin_size, (bin + 1) * bin_size). Throws RangeError.
  TableView bin_view(std::uint64_t bin, std::uint64_t bin_size) const;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::uint32_t table_id_;
  std::uint64_t logical_entries_;
  std::uint64_t num_entries_;
  std::uint32_t entry_bytes_;
  std::vector<std::uint64_t> words_;
};

// Table file: 32-byte little-endian header
//   "DPTB" | version u32 | table_id u32 | L u64 | D u32 | flags u32 | reserved u32
// followed by L * D bytes of row-major payload. L is the logical row count.
std::vector<std::uint8_t> encode_table(const EmbeddingTable& t);
EmbeddingTable decode_table(std::span<const std::uint8_t> bytes);
void store_table(const EmbeddingTable& t, const std::filesystem::path& path);
EmbeddingTable load_table(const std::filesystem::path& path);

// One inference per entry; each holds the table indices it looked up.
using AccessTrace = std::vector<std::vector<std::uint64_t>>;

// One inference per line, space-separated decimal indices. Blank lines are
// empty inferences.
AccessTrace parse_trace(std::istream& in);
AccessTrace load_trace(const std::filesystem::path& path);
void store_trace(const AccessTrace& trace, const std::filesystem::path& path);

// Indices ordered by descending access count, ties by lower index; the
// first `hot_size` of them. Throws ConfigError if hot_size > num_entries.
std::vector<std::uint64_t> most_frequent(const AccessTrace& trace, std::uint64_t num_entries,
                                         std::uint64_t hot_size);

// Sorted (feature value, hot row) pairs; what the client downloads.
class HotIndexMap {
 public:
  HotIndexMap() = default;
  explicit HotIndexMap(std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs);

  std::optional<std::uint64_t> find(std::uint64_t index) const;
  std::size_t size() const { return pairs_.size(); }
  const auto& pairs() const { return pairs_; }

  friend bool operator==(const HotIndexMap&, const HotIndexMap&) = default;

 private:
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs_;
};

std::vector<std::uint8_t> encode_hot_map(const HotIndexMap& m);
HotIndexMap decode_hot_map(std::span<const std::uint8_t> bytes);

struct HotSplit {
  std::shared_ptr<const EmbeddingTable> hot_table;
  std::shared_ptr<const EmbeddingTable> full_table;
  HotIndexMap hot_index_map;
  std::uint32_t q_hot = 0;
  std::uint32_t q_full = 0;
};

// Hot table rows copy the `hot_size` most frequent rows of `full`; the
// full table keeps them too. Hot table id is full id + 1 unless given.
HotSplit build_hot_split(std::shared_ptr<const EmbeddingTable> full, const AccessTrace& trace,
                         std::uint64_t hot_size, std::uint32_t q_hot, std::uint32_t q_full,
                         std::optional<std::uint32_t> hot_table_id = std::nullopt);

// companions[i] lists up to C indices most often seen in the same inference
// as i (ties by lower index), most frequent first.
using CompanionMap = std::vector<std::vector<std::uint64_t>>;

CompanionMap top_companions(const AccessTrace& trace, std::uint64_t num_entries, std::uint32_t c);

std::vector<std::uint8_t> encode_companion_map(const CompanionMap& m, std::uint32_t c);
std::pair<CompanionMap, std::uint32_t> decode_companion_map(std::span<const std::uint8_t> bytes);

struct ColocatedTable {
  std::shared_ptr<const EmbeddingTable> base;
  std::uint32_t c = 0;
  // Widened rows: base row i followed by its companions' rows, zero-filled
  // where fewer than c companions exist. Shares base when c == 0.
  std::shared_ptr<const EmbeddingTable> table;
  CompanionMap companion_map;
};

ColocatedTable build_colocated(std::shared_ptr<const EmbeddingTable> base,
                               const AccessTrace& trace, std::uint32_t c);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace dpir::table
