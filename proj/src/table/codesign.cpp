#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_map>

#include "dpir/byte_io.hpp"
#include "dpir/errors.hpp"
#include "dpir/table.hpp"

namespace dpir::table {
namespace {

constexpr std::uint32_t kSidecarVersion = 1;
constexpr std::uint64_t kNoCompanion = ~std::uint64_t{0};

void check_trace(const AccessTrace& trace, std::uint64_t num_entries) {
  for (const auto& inference : trace) {
    for (auto idx : inference) {
      if (idx >= num_entries) {
        throw RangeError("trace index " + std::to_string(idx) + " outside table of " +
                         std::to_string(num_entries));
      }
    }
  }
}

std::vector<std::uint64_t> distinct(const std::vector<std::uint64_t>& inference) {
  std::vector<std::uint64_t> d = inference;
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  return d;
}

}  // namespace

std::vector<std::uint64_t> most_frequent(const AccessTrace& trace, std::uint64_t num_entries,
                                         std::uint64_t hot_size) {
  if (hot_size > num_entries) {
    throw ConfigError("hot size " + std::to_string(hot_size) + " exceeds table size " +
                      std::to_string(num_entries));
  }
  check_trace(trace, num_entries);
  std::vector<std::uint64_t> counts(num_entries, 0);
  for (const auto& inference : trace) {
    for (auto idx : inference) ++counts[idx];
  }
  std::vector<std::uint64_t> order(num_entries);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(hot_size), order.end(),
                    [&](std::uint64_t a, std::uint64_t b) {
                      return counts[a] != counts[b] ? counts[a] > counts[b] : a < b;
                    });
  order.resize(hot_size);
  return order;
}

HotIndexMap::HotIndexMap(std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs)
    : pairs_(std::move(pairs)) {
  std::sort(pairs_.begin(), pairs_.end());
  for (std::size_t k = 1; k < pairs_.size(); ++k) {
    if (pairs_[k].first == pairs_[k - 1].first) throw ConfigError("duplicate hot index");
  }
}

std::optional<std::uint64_t> HotIndexMap::find(std::uint64_t index) const {
  auto it = std::lower_bound(pairs_.begin(), pairs_.end(), std::make_pair(index, std::uint64_t{0}));
  if (it == pairs_.end() || it->first != index) return std::nullopt;
  return it->second;
}

std::vector<std::uint8_t> encode_hot_map(const HotIndexMap& m) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put_tag("DPHM");
  w.put<std::uint32_t>(kSidecarVersion);
  w.put<std::uint64_t>(m.size());
  for (const auto& [feature, row] : m.pairs()) {
    w.put<std::uint64_t>(feature);
    w.put<std::uint64_t>(row);
  }
  return out;
}

HotIndexMap decode_hot_map(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.tag_is("DPHM")) throw FormatError("bad hot map magic");
  if (r.get<std::uint32_t>() != kSidecarVersion) throw FormatError("unsupported hot map version");
  const auto n = r.get<std::uint64_t>();
  if (r.remaining() != n * 16) throw FormatError("hot map length mismatch");
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
  pairs.reserve(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    const auto feature = r.get<std::uint64_t>();
    pairs.emplace_back(feature, r.get<std::uint64_t>());
  }
  return HotIndexMap(std::move(pairs));
}

HotSplit build_hot_split(std::shared_ptr<const EmbeddingTable> full, const AccessTrace& trace,
                         std::uint64_t hot_size, std::uint32_t q_hot, std::uint32_t q_full,
                         std::optional<std::uint32_t> hot_table_id) {
  if (trace.empty()) throw ConfigError("hot split needs a nonempty trace");
  if (hot_size == 0) throw ConfigError("hot size must be positive");
  const auto hot = most_frequent(trace, full->logical_entries(), hot_size);
  auto hot_table = std::make_shared<EmbeddingTable>(hot_table_id.value_or(full->table_id() + 1),
                                                    hot_size, full->entry_bytes());
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
  for (std::uint64_t r = 0; r < hot.size(); ++r) {
    const auto src = full->row(hot[r]);
    std::copy(src.begin(), src.end(), hot_table->mutable_row(r).begin());
    pairs.emplace_back(hot[r], r);
  }
  return HotSplit{std::move(hot_table), std::move(full), HotIndexMap(std::move(pairs)), q_hot, q_full};
}

CompanionMap top_companions(const AccessTrace& trace, std::uint64_t num_entries, std::uint32_t c) {
  CompanionMap result(num_entries);
  if (c == 0) return result;
  check_trace(trace, num_entries);
  std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> counts(num_entries);
  for (const auto& inference : trace) {
    const auto d = distinct(inference);
    for (std::size_t x = 0; x < d.size(); ++x) {
      for (std::size_t y = 0; y < d.size(); ++y) {
        if (x != y) ++counts[d[x]][d[y]];
      }
    }
  }
  for (std::uint64_t i = 0; i < num_entries; ++i) {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> cands(counts[i].begin(), counts[i].end());
    const auto take = std::min<std::size_t>(c, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                      [](const auto& a, const auto& b) {
                        return a.second != b.second ? a.second > b.second : a.first < b.first;
                      });
    for (std::size_t k = 0; k < take; ++k) result[i].push_back(cands[k].first);
  }
  return result;
}

std::vector<std::uint8_t> encode_companion_map(const CompanionMap& m, std::uint32_t c) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.put_tag("DPCM");
  w.put<std::uint32_t>(kSidecarVersion);
  w.put<std::uint32_t>(c);
  w.put<std::uint32_t>(0);
  w.put<std::uint64_t>(m.size());
  for (const auto& companions : m) {
    if (companions.size() > c) throw ConfigError("companion list longer than C");
    for (std::uint32_t k = 0; k < c; ++k) {
      w.put<std::uint64_t>(k < companions.size() ? companions[k] : kNoCompanion);
    }
  }
  return out;
}

std::pair<CompanionMap, std::uint32_t> decode_companion_map(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.tag_is("DPCM")) throw FormatError("bad companion map magic");
  if (r.get<std::uint32_t>() != kSidecarVersion) throw FormatError("unsupported companion map version");
  const auto c = r.get<std::uint32_t>();
  r.get<std::uint32_t>();
  const auto n = r.get<std::uint64_t>();
  if (c != 0 && r.remaining() / (8 * std::uint64_t{c}) != n) throw FormatError("companion map length mismatch");
  if (r.remaining() != n * c * 8) throw FormatError("companion map length mismatch");
  CompanionMap m(n);
  for (auto& companions : m) {
    for (std::uint32_t k = 0; k < c; ++k) {
      const auto v = r.get<std::uint64_t>();
      if (v != kNoCompanion) companions.push_back(v);
    }
  }
  return {std::move(m), c};
}

ColocatedTable build_colocated(std::shared_ptr<const EmbeddingTable> base,
                               const AccessTrace& trace, std::uint32_t c) {
  ColocatedTable out;
  out.c = c;
  out.companion_map = top_companions(trace, base->logical_entries(), c);
  if (c == 0) {
    out.table = base;
    out.base = std::move(base);
    return out;
  }
  const std::uint32_t d = base->entry_bytes();
  auto wide = std::make_shared<EmbeddingTable>(base->table_id(), base->logical_entries(), d * (c + 1));
  for (std::uint64_t i = 0; i < base->logical_entries(); ++i) {
    auto dst = wide->mutable_row(i);
    const auto own = base->row(i);
    std::copy(own.begin(), own.end(), dst.begin());
    const auto& companions = out.companion_map[i];
    for (std::size_t k = 0; k < companions.size(); ++k) {
      const auto src = base->row(companions[k]);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
    }
  }
  out.table = std::move(wide);
  out.base = std::move(base);
  return out;
}

}  // namespace dpir::table
