#include "dpir/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpir/errors.hpp"

namespace dpir::table {
namespace {

double unit_interval(RandomSource& rng) {
  return static_cast<double>(rng.next_u64() >> 11) * 0x1.0p-53;
}

}  // namespace

EmbeddingTable random_table(std::uint32_t table_id, std::uint64_t logical_entries,
                            std::uint32_t entry_bytes, RandomSource& rng) {
  EmbeddingTable t(table_id, logical_entries, entry_bytes);
  for (std::uint64_t j = 0; j < logical_entries; ++j) rng.fill(t.mutable_row(j));
  return t;
}

AccessTrace zipf_trace(const ZipfTraceOptions& opts, RandomSource& rng) {
  if (opts.num_entries == 0) throw ConfigError("zipf trace needs a nonempty domain");
  std::vector<double> cdf(opts.num_entries);
  double total = 0;
  for (std::uint64_t r = 0; r < opts.num_entries; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), opts.exponent);
    cdf[r] = total;
  }
  std::vector<std::uint64_t> rank_to_index(opts.num_entries);
  std::iota(rank_to_index.begin(), rank_to_index.end(), 0);
  if (opts.permute) {
    for (std::uint64_t k = opts.num_entries - 1; k > 0; --k) {
      std::swap(rank_to_index[k], rank_to_index[rng.uniform(k + 1)]);
    }
  }

  AccessTrace trace(opts.inferences);
  for (auto& inference : trace) {
    for (std::size_t n = 0; n < opts.lookups_per_inference; ++n) {
      const double u = unit_interval(rng) * total;
      auto rank = static_cast<std::uint64_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      rank = std::min(rank, opts.num_entries - 1);
      inference.push_back(rank_to_index[rank]);
      // Blocks are aligned in rank space, so with permute they scatter.
      if (opts.block_size > 1 && unit_interval(rng) < opts.block_probability) {
        const std::uint64_t first = rank - rank % opts.block_size;
        for (std::uint64_t m = first; m < std::min(first + opts.block_size, opts.num_entries); ++m) {
          if (m != rank) inference.push_back(rank_to_index[m]);
        }
      }
    }
  }
  return trace;
}

}  // namespace dpir::table
