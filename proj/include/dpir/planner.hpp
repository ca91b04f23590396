#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dpir/dpf.hpp"
#include "dpir/engine.hpp"
#include "dpir/random.hpp"
#include "dpir/table.hpp"

namespace dpir::planner {

using dpf::DpfKey;

inline constexpr std::uint64_t kNoIndex = ~std::uint64_t{0};

// Contiguous bins of `bin_size` rows over a padded table.
struct BinConfig {
  std::uint64_t bin_size = 0;
  std::uint64_t num_bins = 0;

  // Throws ConfigError unless bin_size is a power of two >= 2 dividing
  // table_entries.
  static BinConfig make(std::uint64_t table_entries, std::uint64_t bin_size);
  std::uint64_t bin_of(std::uint64_t row) const { return row / bin_size; }
  std::uint64_t offset_of(std::uint64_t row) const { return row % bin_size; }
};

struct PlannerConfig {
  std::uint64_t full_bin_size = 0;
  std::uint32_t q_full = 0;
  std::uint64_t hot_bin_size = 0;  // ignored when q_hot == 0
  std::uint32_t q_hot = 0;
  prf::PrfId prf = prf::kDefaultPrf;
};

// What the client knows about the served tables. When co-location is on,
// both tables hold widened rows (entry plus `colocation` companions).
struct TableLayout {
  std::uint64_t full_entries = 0;  // padded
  std::uint64_t hot_entries = 0;   // padded, 0 without a hot table
  const table::HotIndexMap* hot_map = nullptr;
  const table::CompanionMap* companions = nullptr;
  std::uint32_t entry_bytes = 0;  // base width D
  std::uint32_t colocation = 0;   // C

  std::uint32_t row_bytes() const { return entry_bytes * (colocation + 1); }
};

enum class Source : std::uint8_t { Hot, Full };

struct RealQuery {
  Source source = Source::Full;
  std::uint64_t wanted = 0;  // requested index
  std::uint64_t row = 0;     // row in the addressed table
};

// Routing of one request, no keys yet.
struct Routing {
  std::vector<RealQuery> queries;  // request order
  std::vector<std::uint64_t> served;   // queried directly
  std::vector<std::uint64_t> covered;  // carried as a companion of a served row
  std::vector<std::uint64_t> dropped;
  std::size_t wanted_distinct = 0;
};

struct Slot {
  Source source = Source::Full;
  std::uint64_t bin = 0;
  std::uint64_t offset = 0;        // in-bin index the keys point at
  std::uint64_t wanted = kNoIndex;  // kNoIndex for dummies
  DpfKey key_a;
  DpfKey key_b;

  bool real() const { return wanted != kNoIndex; }
};

struct QueryPlan {
  std::vector<Slot> slots;  // q_hot hot slots then q_full full slots, each sorted by bin
  std::vector<std::uint64_t> served;
  std::vector<std::uint64_t> covered;
  std::vector<std::uint64_t> dropped;
  std::size_t dummy_count = 0;

  std::size_t hot_count() const;
  // Serialized key bytes sent to one server.
  std::uint64_t request_bytes() const;
};

class Planner {
 public:
  // Throws ConfigError on inconsistent bins, budgets or layout.
  Planner(const PlannerConfig& config, const TableLayout& layout);

  const PlannerConfig& config() const { return config_; }
  const TableLayout& layout() const { return layout_; }
  const BinConfig& full_bins() const { return full_bins_; }
  const BinConfig& hot_bins() const { return hot_bins_; }

  // Deterministic. Order: dedupe, co-location coverage, hot then full
  // routing with one real query per bin, then a sweep moving dropped
  // indices that a served row carries into `covered`. Throws RangeError.
  Routing route(std::span<const std::uint64_t> wanted) const;

  // Routing plus dummy slots in unused bins and fresh keys for every slot.
  QueryPlan plan(std::span<const std::uint64_t> wanted, RandomSource& rng) const;

  // responses_a/b align with plan.slots. Returns every wanted index the
  // responses carry. Throws FormatError on length mismatch.
  std::map<std::uint64_t, std::vector<std::uint8_t>> reconstruct(
      const QueryPlan& plan, std::span<const std::vector<std::uint8_t>> responses_a,
      std::span<const std::vector<std::uint8_t>> responses_b) const;

  // Server PRF calls one plan costs each server under `strategy`.
  std::uint64_t prf_calls_per_plan(engine::Strategy strategy = engine::Strategy::MemBoundedTree) const;
  // Key bytes sent to one server per plan.
  std::uint64_t comm_bytes_per_plan() const;

 private:
  const std::vector<std::uint64_t>& companions_of(std::uint64_t i) const;

  PlannerConfig config_;
  TableLayout layout_;
  BinConfig full_bins_;
  BinConfig hot_bins_;
};

// Mean over non-empty inferences of |dropped| / |distinct wanted|.
// Throws ConfigError on an empty trace.
double simulate_drop_rate(const table::AccessTrace& trace, const Planner& planner);

// Offline parameter sweep.
struct Grid {
  std::vector<std::uint64_t> bin_sizes{256};
  std::vector<double> hot_fractions{0.0};        // hot table size / L
  std::vector<std::uint64_t> hot_bin_sizes{};     // empty: same as bin size, capped at the hot table
  std::vector<std::uint32_t> q_hot{0};
  std::vector<std::uint32_t> q_full{8};
  std::vector<std::uint32_t> colocation{0};
  std::vector<std::size_t> batch{1};
  std::vector<std::uint64_t> chunk_k{engine::kDefaultChunk};
  std::vector<engine::Strategy> strategies{engine::Strategy::MemBoundedTree};
  prf::PrfId prf = prf::kDefaultPrf;
};

struct Constraints {
  std::uint64_t max_comm_bytes = ~std::uint64_t{0};
  std::uint64_t max_prf_calls = ~std::uint64_t{0};
  double max_drop_rate = 1.0;
};

struct SweepConfig {
  std::uint64_t bin_size = 0;
  std::uint64_t hot_size = 0;
  std::uint64_t hot_bin_size = 0;
  std::uint32_t q_hot = 0;
  std::uint32_t q_full = 0;
  std::uint32_t colocation = 0;
  std::size_t batch = 1;
  std::uint64_t chunk_k = engine::kDefaultChunk;
  engine::Strategy strategy = engine::Strategy::MemBoundedTree;
};

struct SweepResult {
  SweepConfig config;
  std::uint64_t prf_calls = 0;   // per plan, per server
  std::uint64_t comm_bytes = 0;  // per plan, per server
  std::uint64_t peak_bytes = 0;  // engine bound for the full-table batch
  double drop_rate = 0.0;
};

struct SweepOutcome {
  std::vector<SweepResult> evaluated;  // every valid grid point, grid order
  std::vector<SweepResult> front;      // feasible and non-dominated, by drop rate
  bool infeasible = false;             // no grid point met the constraints
  std::size_t skipped = 0;             // grid points with inconsistent parameters
};

// Table width only matters through `entry_bytes`; no table is materialized.
SweepOutcome grid_search(const table::AccessTrace& trace, std::uint64_t num_entries,
                         std::uint32_t entry_bytes, const Grid& grid, const Constraints& constraints,
                         std::size_t workers = 1);

// Non-dominated subset in (prf_calls, comm_bytes, drop_rate), sorted by
// drop rate, then prf calls, then comm bytes.
std::vector<SweepResult> pareto_front(std::vector<SweepResult> results);

// Fixed column order: bin_size,hot_size,hot_bin_size,q_hot,q_full,colocation,
// batch,chunk_k,strategy,prf_calls,comm_bytes,drop_rate
std::string sweep_csv_header();
std::string to_csv_row(const SweepResult& r);

// JSON config files. Throws ConfigError.
PlannerConfig planner_config_from_json(const std::string& text);
std::string planner_config_to_json(const PlannerConfig& c);
std::pair<Grid, Constraints> grid_from_json(const std::string& text);

}  // namespace dpir::planner
