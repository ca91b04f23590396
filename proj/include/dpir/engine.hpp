#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "dpir/dpf.hpp"
#include "dpir/table_view.hpp"
#include "dpir/thread_pool.hpp"

namespace dpir::engine {

using dpf::DpfKey;

enum class Strategy {
  BranchParallel,
  LevelByLevel,
  MemBoundedTree,
  SingleQueryCooperative,
};

inline constexpr Strategy kAllStrategies[] = {Strategy::BranchParallel, Strategy::LevelByLevel,
                                              Strategy::MemBoundedTree,
                                              Strategy::SingleQueryCooperative};

std::string_view to_string(Strategy s);
// Accepts enum spellings and kebab-case ("mem-bounded", "level-by-level",
// "branch-parallel", "cooperative"). Throws ConfigError.
Strategy parse_strategy(std::string_view name);

inline constexpr std::uint64_t kDefaultChunk = 128;
// Tables above this size get one cooperative evaluation per key.
inline constexpr std::uint64_t kCooperativeThreshold = std::uint64_t{1} << 22;
inline constexpr std::uint64_t kDefaultMemoryBudget = std::uint64_t{1} << 30;

struct EvalPlan {
  Strategy strategy = Strategy::MemBoundedTree;
  std::size_t batch_size = 1;
  std::uint64_t chunk_k = kDefaultChunk;  // MemBoundedTree only
  std::size_t workers = 1;
};

// Throws ConfigError if the plan is invalid for a domain of `num_entries`.
void validate(const EvalPlan& plan, std::uint64_t num_entries);

struct CostReport {
  std::uint64_t prf_calls = 0;
  std::uint64_t peak_intermediate_bytes = 0;
  std::chrono::nanoseconds wall_time{0};
  std::uint64_t responses_bytes = 0;
};

// One server's share of the selected row(s), as little-endian words.
using ResponseShare = std::vector<std::uint64_t>;

inline std::span<const std::uint8_t> as_bytes(const ResponseShare& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size() * 8};
}

struct BatchResult {
  std::vector<ResponseShare> shares;
  CostReport cost;
};

struct SingleResult {
  ResponseShare share;
  CostReport cost;
};

struct RowRange {
  std::uint64_t first = 0;
  std::uint64_t count = 0;
};

struct PartitionedResult {
  ResponseShare share;                   // XOR of all partials
  std::vector<ResponseShare> partials;   // one per shard, in input order
  std::vector<std::uint64_t> shard_prf_calls;
  CostReport cost;
};

// High-water mark of live node-buffer bytes.
class NodeMemory {
 public:
  void acquire(std::uint64_t bytes);
  void release(std::uint64_t bytes) { live_.fetch_sub(bytes, std::memory_order_relaxed); }
  std::uint64_t peak() const { return peak_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> live_{0};
  std::atomic<std::uint64_t> peak_{0};
};

// Batched full-domain evaluation fused with the table product. All
// strategies return bit-identical shares; they differ in PRF work, peak
// intermediate memory and parallel schedule.
class Engine {
 public:
  explicit Engine(std::size_t workers, std::uint64_t memory_budget_bytes = kDefaultMemoryBudget);

  std::size_t workers() const { return pool_.size(); }
  std::uint64_t memory_budget() const { return memory_budget_; }

  // Keys are evaluated in groups of plan.batch_size. Every key's domain must
  // equal the table's row count. Throws ConfigError or CapacityError.
  BatchResult eval_batch(std::span<const DpfKey> keys, const TableView& table, const EvalPlan& plan);

  SingleResult eval_branch_parallel(const DpfKey& key, const TableView& table, std::size_t workers);
  SingleResult eval_level_by_level(const DpfKey& key, const TableView& table, std::size_t workers);
  SingleResult eval_mem_bounded(const DpfKey& key, const TableView& table, std::uint64_t chunk_k,
                                std::size_t workers);
  SingleResult eval_cooperative_single(const DpfKey& key, const TableView& table, std::size_t workers);

  // Each shard evaluates only the leaves of its row range; partials XOR to
  // the whole-table share. Shards must partition [0, L).
  PartitionedResult eval_partitioned(const DpfKey& key, const TableView& table,
                                     std::span<const RowRange> shards, std::size_t workers);

 private:
  ThreadPool pool_;
  std::uint64_t memory_budget_;
};

// MemBoundedTree with chunk 128 and the largest batch that keeps
// B * K * log2(L) * 16 within the budget; SingleQueryCooperative above 2^22.
EvalPlan select_strategy(std::uint64_t num_entries, std::size_t requested_batch,
                         std::uint64_t memory_budget_bytes, std::size_t workers = 1);

// Counter laws, used by the bench and the tests.
std::uint64_t expected_prf_calls(Strategy s, std::uint64_t num_entries, std::size_t batch);
std::uint64_t mem_bounded_peak_bound(std::uint64_t num_entries, std::uint64_t chunk_k, std::size_t batch);

}  // namespace dpir::engine
