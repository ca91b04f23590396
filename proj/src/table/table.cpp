#include "dpir/table.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "dpir/byte_io.hpp"
#include "dpir/errors.hpp"

namespace dpir::table {
namespace {

constexpr std::uint32_t kTableVersion = 1;

}  // namespace

EmbeddingTable::EmbeddingTable(std::uint32_t table_id, std::uint64_t logical_entries,
                               std::uint32_t entry_bytes)
    : table_id_(table_id),
      logical_entries_(logical_entries),
      num_entries_(std::max<std::uint64_t>(2, std::bit_ceil(logical_entries))),
      entry_bytes_(entry_bytes) {
  if (logical_entries == 0) throw ConfigError("table must have at least one entry");
  if (entry_bytes == 0 || entry_bytes % 16 != 0) {
    throw ConfigError("entry size must be a positive multiple of 16 bytes, got " +
                      std::to_string(entry_bytes));
  }
  words_.assign(num_entries_ * (entry_bytes_ / 8u), 0);
}

std::span<const std::uint8_t> EmbeddingTable::row(std::uint64_t j) const {
  if (j >= num_entries_) throw RangeError("row " + std::to_string(j) + " out of range");
  return {reinterpret_cast<const std::uint8_t*>(words_.data()) + j * entry_bytes_, entry_bytes_};
}

std::span<std::uint8_t> EmbeddingTable::mutable_row(std::uint64_t j) {
  if (j >= logical_entries_) throw RangeError("row " + std::to_string(j) + " is not writable");
  return {reinterpret_cast<std::uint8_t*>(words_.data()) + j * entry_bytes_, entry_bytes_};
}

TableView EmbeddingTable::bin_view(std::uint64_t bin, std::uint64_t bin_size) const {
  if (bin_size == 0 || num_entries_ % bin_size != 0) {
    throw ConfigError("bin size " + std::to_string(bin_size) + " does not divide table size");
  }
  if (bin >= num_entries_ / bin_size) throw RangeError("bin " + std::to_string(bin) + " out of range");
  return view().slice(bin * bin_size, bin_size);
}

std::vector<std::uint8_t> encode_table(const EmbeddingTable& t) {
  std::vector<std::uint8_t> out;
  out.reserve(EmbeddingTable::kHeaderBytes + t.logical_entries() * t.entry_bytes());
  ByteWriter w(out);
  w.put_tag("DPTB");
  w.put<std::uint32_t>(kTableVersion);
  w.put<std::uint32_t>(t.table_id());
  w.put<std::uint64_t>(t.logical_entries());
  w.put<std::uint32_t>(t.entry_bytes());
  w.put<std::uint32_t>(0);  // flags
  w.put<std::uint32_t>(0);  // reserved
  for (std::uint64_t j = 0; j < t.logical_entries(); ++j) w.put_bytes(t.row(j));
  return out;
}

EmbeddingTable decode_table(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < EmbeddingTable::kHeaderBytes) throw FormatError("table header truncated");
  ByteReader r(bytes);
  if (!r.tag_is("DPTB")) throw FormatError("bad table magic");
  if (r.get<std::uint32_t>() != kTableVersion) throw FormatError("unsupported table version");
  const auto id = r.get<std::uint32_t>();
  const auto entries = r.get<std::uint64_t>();
  const auto entry_bytes = r.get<std::uint32_t>();
  const auto flags = r.get<std::uint32_t>();
  r.get<std::uint32_t>();
  if (flags != 0) throw FormatError("unknown table flags");
  if (entries == 0 || entry_bytes == 0 || entry_bytes % 16 != 0) {
    throw FormatError("bad table dimensions");
  }
  if (r.remaining() / entry_bytes < entries || r.remaining() != entries * entry_bytes) {
    throw FormatError("table payload length does not match header");
  }
  EmbeddingTable t(id, entries, entry_bytes);
  for (std::uint64_t j = 0; j < entries; ++j) {
    const auto src = r.get_bytes(entry_bytes);
    std::copy(src.begin(), src.end(), t.mutable_row(j).begin());
  }
  return t;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void store_table(const EmbeddingTable& t, const std::filesystem::path& path) {
  write_file(path, encode_table(t));
}

EmbeddingTable load_table(const std::filesystem::path& path) { return decode_table(read_file(path)); }

AccessTrace parse_trace(std::istream& in) {
  AccessTrace trace;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<std::uint64_t> inference;
    std::string tok;
    while (fields >> tok) {
      if (tok.find_first_not_of("0123456789") != std::string::npos) {
        throw FormatError("bad trace token '" + tok + "'");
      }
      inference.push_back(std::stoull(tok));
    }
    trace.push_back(std::move(inference));
  }
  return trace;
}

AccessTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_trace(in);
}

void store_trace(const AccessTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& inference : trace) {
    for (std::size_t k = 0; k < inference.size(); ++k) out << (k ? " " : "") << inference[k];
    out << '\n';
  }
}

}  // namespace dpir::table
