#pragma once

#include <cstdint>
#include <vector>

#include "dpir/random.hpp"
#include "dpir/table.hpp"

namespace dpir::table {

// Table with uniformly random logical rows.
EmbeddingTable random_table(std::uint32_t table_id, std::uint64_t logical_entries,
                            std::uint32_t entry_bytes, RandomSource& rng);

struct ZipfTraceOptions {
  std::uint64_t num_entries = 1024;
  std::size_t inferences = 1000;
  std::size_t lookups_per_inference = 8;
  double exponent = 1.0;
  // Planted co-occurrence: with probability block_probability a sampled
  // index pulls in the rest of its block of block_size popularity ranks.
  std::uint64_t block_size = 0;
  double block_probability = 0.0;
  // Scatter popularity ranks over the index space.
  bool permute = true;
};

// Draws each lookup from P(rank r) ~ 1 / r^exponent.
AccessTrace zipf_trace(const ZipfTraceOptions& opts, RandomSource& rng);

}  // namespace dpir::table
