#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpir/engine.hpp"
#include "dpir/planner.hpp"
#include "dpir/prf.hpp"

namespace dpir::bench {

// "cpus=<n> aesni=<0|1>"; attached to every timing row.
std::string machine_fingerprint();

struct KernelSweepSpec {
  std::vector<std::uint64_t> entries{std::uint64_t{1} << 14};
  std::vector<engine::Strategy> strategies{std::begin(engine::kAllStrategies), std::end(engine::kAllStrategies)};
  std::vector<std::size_t> batches{1, 16, 64};
  std::vector<std::uint64_t> chunks{engine::kDefaultChunk};  // MemBoundedTree rows only
  std::size_t workers = 1;
  std::uint64_t memory_budget = engine::kDefaultMemoryBudget;
  std::uint32_t entry_bytes = 16;
  prf::PrfId prf = prf::kDefaultPrf;
  int repetitions = 3;
  std::uint64_t seed = 1;
};

struct KernelRow {
  std::uint64_t entries = 0;
  engine::Strategy strategy{};
  std::size_t batch = 0;
  std::uint64_t chunk = 0;  // 0 where K does not apply
  std::size_t workers = 0;
  std::string status;       // "ok" or "capacity"
  std::uint64_t prf_calls = 0;
  std::uint64_t expected_prf_calls = 0;
  std::uint64_t peak_bytes = 0;
  std::uint64_t peak_bound = 0;  // MemBoundedTree upper bound, LevelByLevel lower bound, else 0
  double latency_ms = 0;         // median per batch
  double qps = 0;
};

std::vector<KernelRow> run_kernel_sweep(const KernelSweepSpec& spec);
void write_kernel_csv(std::ostream& out, const std::vector<KernelRow>& rows);

struct PrfSweepSpec {
  std::uint64_t entries = std::uint64_t{1} << 20;
  std::size_t batch = 512;
  std::uint32_t entry_bytes = 16;
  std::size_t workers = 1;
  int repetitions = 3;
  std::uint64_t seed = 1;
};

struct PrfRow {
  prf::PrfId prf{};
  std::uint64_t entries = 0;
  std::size_t batch = 0;
  std::uint64_t prf_calls = 0;
  double latency_ms = 0;
  double qps = 0;
  double relative_to_aes = 0;
  bool correct = false;  // every reconstructed row equals the plaintext row
};

std::vector<PrfRow> run_prf_sweep(const PrfSweepSpec& spec);
void write_prf_csv(std::ostream& out, const std::vector<PrfRow>& rows);

struct EndToEndSpec {
  std::uint64_t entries = std::uint64_t{1} << 14;
  std::uint32_t entry_bytes = 256;
  std::uint64_t bin_size = 1024;
  std::uint32_t q_full = 16;
  std::size_t lookups_per_plan = 10;
  std::size_t plans = 20;
  std::vector<std::size_t> server_batches{1, 64};
  std::size_t workers = 1;
  std::optional<engine::Strategy> strategy;
  prf::PrfId prf = prf::kDefaultPrf;
  std::uint64_t seed = 1;
};

struct EndToEndRow {
  std::size_t server_batch = 0;
  std::size_t plans = 0;
  std::uint64_t entries_checked = 0;
  std::uint64_t byte_errors = 0;
  std::uint64_t request_bytes = 0;   // per plan, per server
  std::uint64_t response_bytes = 0;  // per plan, per server
  double mean_ms = 0;
  double p50_ms = 0;
  double max_ms = 0;
};

// Two in-process servers on loopback per batch policy.
std::vector<EndToEndRow> run_end_to_end(const EndToEndSpec& spec);
void write_end_to_end_csv(std::ostream& out, const std::vector<EndToEndRow>& rows);

struct CodesignSpec {
  std::uint64_t entries = std::uint64_t{1} << 14;
  std::uint32_t entry_bytes = 16;
  planner::Grid baseline;  // forced to no hot table, C = 0
  planner::Grid codesign;
  planner::Constraints constraints;
  std::size_t workers = 1;
};

struct CodesignReport {
  planner::SweepOutcome baseline;
  planner::SweepOutcome codesign;
};

// Throws ConfigError on an empty trace.
CodesignReport run_codesign_sweep(const CodesignSpec& spec, const table::AccessTrace& trace);
// One row per front point, tagged "baseline" or "codesign".
void write_codesign_csv(std::ostream& out, const CodesignReport& report);

// Lowest drop rate each front reaches within a (comm, prf) budget; 1.0 when
// nothing fits.
struct BudgetPoint {
  std::uint64_t max_comm_bytes = 0;
  std::uint64_t max_prf_calls = 0;
  double baseline = 1.0;
  double codesign = 1.0;
};

std::vector<BudgetPoint> compare_fronts(const std::vector<planner::SweepResult>& baseline,
                                        const std::vector<planner::SweepResult>& codesign,
                                        const std::vector<std::pair<std::uint64_t, std::uint64_t>>& budgets);

// Zipf(1.0) trace with planted blocks, plus the grids used by the
// co-design scenario.
table::AccessTrace default_codesign_trace(std::uint64_t entries, std::uint64_t seed);
CodesignSpec default_codesign_spec(std::uint64_t entries);

}  // namespace dpir::bench
