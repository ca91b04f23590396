#include "dpir/engine.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <string>
#include <utility>

#include "dpir/errors.hpp"

namespace dpir::engine {
namespace {

using Clock = std::chrono::steady_clock;

// Tracked buffer of node values.
class NodeBuffer {
 public:
  NodeBuffer(NodeMemory& mem, std::size_t n) : mem_(&mem), nodes_(n) { mem.acquire(bytes()); }
  NodeBuffer(NodeBuffer&& o) noexcept : mem_(std::exchange(o.mem_, nullptr)), nodes_(std::move(o.nodes_)) {}
  NodeBuffer& operator=(NodeBuffer&& o) noexcept {
    if (this != &o) {
      free();
      mem_ = std::exchange(o.mem_, nullptr);
      nodes_ = std::move(o.nodes_);
    }
    return *this;
  }
  ~NodeBuffer() { free(); }

  Seed& operator[](std::size_t i) { return nodes_[i]; }
  const Seed& operator[](std::size_t i) const { return nodes_[i]; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::uint64_t bytes() const { return nodes_.size() * sizeof(Seed); }
  void free() {
    if (mem_ != nullptr) mem_->release(bytes());
    mem_ = nullptr;
  }

  NodeMemory* mem_;
  std::vector<Seed> nodes_;
};

void check_domain(const DpfKey& key, const TableView& table) {
  if (key.domain().num_entries() != table.rows) {
    throw ConfigError("key domain " + std::to_string(key.domain().num_entries()) +
                      " does not match table of " + std::to_string(table.rows) + " rows");
  }
}

// Pairwise XOR reduction; partials[0] holds the result.
ResponseShare tree_reduce(std::vector<ResponseShare> partials) {
  for (std::size_t stride = 1; stride < partials.size(); stride *= 2) {
    for (std::size_t i = 0; i + stride < partials.size(); i += 2 * stride) {
      xor_into(partials[i], partials[i + stride]);
    }
  }
  return std::move(partials.front());
}

unsigned ceil_log2(std::uint64_t n) { return n <= 1 ? 0u : static_cast<unsigned>(std::bit_width(n - 1)); }

// Expands `root` (the node at `root_level`) in place into the 2^levels nodes
// `levels` below it.
void expand_in_place(const DpfKey& key, prf::Expander& ex, NodeBuffer& buf, const Seed& root,
                     unsigned root_level, unsigned levels) {
  buf[0] = root;
  for (unsigned t = 0; t < levels; ++t) {
    for (std::size_t j = std::size_t{1} << t; j-- > 0;) {
      const Seed parent = buf[j];
      buf[2 * j] = key.descend(ex, parent, root_level + t + 1, 0);
      buf[2 * j + 1] = key.descend(ex, parent, root_level + t + 1, 1);
    }
  }
}

// Branch-parallel work item: recompute the root-to-leaf path of every leaf.
void branch_leaves(const DpfKey& key, const TableView& table, std::uint64_t first,
                   std::uint64_t last, prf::Expander& ex, NodeMemory& mem, ResponseShare& acc) {
  const unsigned depth = key.domain().depth();
  NodeBuffer path(mem, depth + 1);
  for (std::uint64_t j = first; j < last; ++j) {
    path[0] = key.root();
    for (unsigned level = 1; level <= depth; ++level) {
      path[level] = key.descend(ex, path[level - 1], level, dpf::path_bit(j, depth, level));
    }
    masked_xor(acc, table.row(j), path[depth].low_bit());
  }
}

// Depth-first walk of the subtree under `root`, holding at most `chunk`
// nodes per level and folding leaves straight into `acc`.
void mem_bounded_subtree(const DpfKey& key, const TableView& table, prf::Expander& ex,
                         const Seed& root, unsigned root_level, std::uint64_t leaf_first,
                         std::uint64_t chunk, NodeMemory& mem, ResponseShare& acc) {
  const unsigned depth = key.domain().depth();
  const unsigned height = depth - root_level;
  if (height == 0) {
    masked_xor(acc, table.row(leaf_first), root.low_bit());
    return;
  }
  const unsigned top = std::min<unsigned>(static_cast<unsigned>(std::countr_zero(chunk)), height);
  const std::size_t width = std::size_t{1} << top;
  const std::size_t step = std::max<std::size_t>(1, width / 2);

  std::vector<NodeBuffer> levels;
  levels.reserve(height - top + 1);
  levels.emplace_back(mem, width);
  for (unsigned l = top; l < height; ++l) levels.emplace_back(mem, 2 * step);
  expand_in_place(key, ex, levels[0], root, root_level, top);

  auto walk = [&](auto& self, std::size_t li, unsigned level, std::uint64_t first,
                  std::size_t count) -> void {
    const NodeBuffer& nodes = levels[li];
    if (level == depth) {
      for (std::size_t n = 0; n < count; ++n) {
        masked_xor(acc, table.row(leaf_first + first + n), nodes[n].low_bit());
      }
      return;
    }
    NodeBuffer& children = levels[li + 1];
    for (std::size_t p0 = 0; p0 < count; p0 += step) {
      const std::size_t np = std::min(step, count - p0);
      for (std::size_t q = 0; q < np; ++q) {
        const Seed& parent = nodes[p0 + q];
        children[2 * q] = key.descend(ex, parent, level + 1, 0);
        children[2 * q + 1] = key.descend(ex, parent, level + 1, 1);
      }
      self(self, li + 1, level + 1, 2 * (first + p0), 2 * np);
    }
  };
  walk(walk, 0, root_level + top, 0, width);
}

void visit_range(const DpfKey& key, const TableView& table, prf::Expander& ex, const Seed& node,
                 unsigned level, std::uint64_t index, std::uint64_t first, std::uint64_t last,
                 ResponseShare& acc) {
  const unsigned depth = key.domain().depth();
  if (level == depth) {
    masked_xor(acc, table.row(index), node.low_bit());
    return;
  }
  const unsigned below = depth - level - 1;
  for (unsigned c = 0; c < 2; ++c) {
    const std::uint64_t child = 2 * index + c;
    const std::uint64_t lo = child << below;
    const std::uint64_t hi = (child + 1) << below;
    if (hi <= first || lo >= last) continue;
    visit_range(key, table, ex, key.descend(ex, node, level + 1, c), level + 1, child, first, last, acc);
  }
}

struct KeyParts {
  std::size_t keys;
  std::size_t parts;  // workers per key
};

KeyParts split_workers(std::size_t keys, std::size_t workers, std::uint64_t max_parts) {
  const std::size_t per_key = std::max<std::size_t>(1, workers / std::max<std::size_t>(1, keys));
  return {keys, static_cast<std::size_t>(std::min<std::uint64_t>(per_key, max_parts))};
}

}  // namespace

void NodeMemory::acquire(std::uint64_t bytes) {
  const std::uint64_t now = live_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  std::uint64_t seen = peak_.load(std::memory_order_relaxed);
  while (now > seen && !peak_.compare_exchange_weak(seen, now, std::memory_order_relaxed)) {
  }
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::BranchParallel: return "BranchParallel";
    case Strategy::LevelByLevel: return "LevelByLevel";
    case Strategy::MemBoundedTree: return "MemBoundedTree";
    case Strategy::SingleQueryCooperative: return "SingleQueryCooperative";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  std::string n;
  for (char ch : name) {
    if (ch != '-' && ch != '_') n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  if (n == "branchparallel" || n == "branch") return Strategy::BranchParallel;
  if (n == "levelbylevel" || n == "level") return Strategy::LevelByLevel;
  if (n == "memboundedtree" || n == "membounded" || n == "memboundtree") return Strategy::MemBoundedTree;
  if (n == "singlequerycooperative" || n == "cooperative") return Strategy::SingleQueryCooperative;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

void validate(const EvalPlan& plan, std::uint64_t num_entries) {
  if (plan.batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (plan.workers == 0) throw ConfigError("worker count must be >= 1");
  if (plan.strategy == Strategy::MemBoundedTree) {
    if (plan.chunk_k == 0 || !std::has_single_bit(plan.chunk_k)) {
      throw ConfigError("chunk K must be a power of two");
    }
    if (plan.chunk_k > num_entries) {
      throw ConfigError("chunk K " + std::to_string(plan.chunk_k) + " exceeds table size " +
                        std::to_string(num_entries));
    }
  }
  if (plan.strategy == Strategy::SingleQueryCooperative && plan.batch_size != 1) {
    throw ConfigError("cooperative evaluation runs one key at a time (batch size 1)");
  }
}

std::uint64_t expected_prf_calls(Strategy s, std::uint64_t num_entries, std::size_t batch) {
  const auto depth = static_cast<std::uint64_t>(std::countr_zero(num_entries));
  if (s == Strategy::BranchParallel) return batch * num_entries * depth;
  return batch * (2 * num_entries - 2);
}

std::uint64_t mem_bounded_peak_bound(std::uint64_t num_entries, std::uint64_t chunk_k, std::size_t batch) {
  const auto depth = static_cast<std::uint64_t>(std::countr_zero(num_entries));
  return batch * chunk_k * depth * sizeof(Seed);
}

EvalPlan select_strategy(std::uint64_t num_entries, std::size_t requested_batch,
                         std::uint64_t memory_budget_bytes, std::size_t workers) {
  EvalPlan plan;
  plan.workers = std::max<std::size_t>(1, workers);
  if (num_entries > kCooperativeThreshold) {
    plan.strategy = Strategy::SingleQueryCooperative;
    plan.batch_size = 1;
    return plan;
  }
  plan.strategy = Strategy::MemBoundedTree;
  plan.chunk_k = std::min(kDefaultChunk, num_entries);
  const std::uint64_t per_key = mem_bounded_peak_bound(num_entries, plan.chunk_k, 1);
  const std::uint64_t fits = std::max<std::uint64_t>(1, memory_budget_bytes / per_key);
  plan.batch_size = static_cast<std::size_t>(
      std::min<std::uint64_t>(std::max<std::size_t>(1, requested_batch), fits));
  return plan;
}

Engine::Engine(std::size_t workers, std::uint64_t memory_budget_bytes)
    : pool_(workers), memory_budget_(memory_budget_bytes) {}

BatchResult Engine::eval_batch(std::span<const DpfKey> keys, const TableView& table,
                               const EvalPlan& plan) {
  validate(plan, table.rows);
  for (const auto& k : keys) check_domain(k, table);

  const auto start = Clock::now();
  const std::uint64_t leaves = table.rows;
  const unsigned depth = static_cast<unsigned>(std::countr_zero(leaves));
  NodeMemory mem;
  std::atomic<std::uint64_t> calls{0};
  BatchResult result;
  result.shares.resize(keys.size());

  for (std::size_t g0 = 0; g0 < keys.size(); g0 += plan.batch_size) {
    const std::size_t nb = std::min(plan.batch_size, keys.size() - g0);
    auto group = keys.subspan(g0, nb);

    switch (plan.strategy) {
      case Strategy::BranchParallel: {
        const auto [n, parts] = split_workers(nb, plan.workers, leaves);
        std::vector<ResponseShare> partial(nb * parts, ResponseShare(table.row_words, 0));
        pool_.for_each(plan.workers, nb * parts, [&](std::size_t t) {
          const std::size_t b = t / parts, r = t % parts;
          prf::Expander ex(group[b].prf());
          branch_leaves(group[b], table, leaves * r / parts, leaves * (r + 1) / parts, ex, mem, partial[t]);
          calls.fetch_add(ex.calls(), std::memory_order_relaxed);
        });
        for (std::size_t b = 0; b < nb; ++b) {
          result.shares[g0 + b] = tree_reduce({partial.begin() + static_cast<std::ptrdiff_t>(b * parts),
                                               partial.begin() + static_cast<std::ptrdiff_t>((b + 1) * parts)});
        }
        break;
      }

      case Strategy::MemBoundedTree: {
        if (mem_bounded_peak_bound(leaves, plan.chunk_k, nb) > memory_budget_) {
          throw CapacityError("memory-bounded batch of " + std::to_string(nb) + " exceeds budget");
        }
        const auto [n, parts] = split_workers(nb, plan.workers, leaves / 2);
        const unsigned split_level = std::min(depth, ceil_log2(parts));
        const std::size_t subtrees = std::size_t{1} << split_level;
        const std::uint64_t chunk = std::bit_floor(std::max<std::uint64_t>(1, plan.chunk_k / parts));

        // Shared top of each key's tree, deep enough for one subtree per part.
        std::vector<NodeBuffer> tops;
        std::uint64_t top_calls = 0;
        if (split_level > 0) {
          for (const auto& key : group) {
            prf::Expander ex(key.prf());
            tops.emplace_back(mem, subtrees);
            expand_in_place(key, ex, tops.back(), key.root(), 0, split_level);
            top_calls += ex.calls();
          }
        }
        calls.fetch_add(top_calls, std::memory_order_relaxed);

        std::vector<ResponseShare> partial(nb * parts, ResponseShare(table.row_words, 0));
        pool_.for_each(plan.workers, nb * parts, [&](std::size_t t) {
          const std::size_t b = t / parts, r = t % parts;
          const DpfKey& key = group[b];
          prf::Expander ex(key.prf());
          const std::uint64_t span_leaves = leaves >> split_level;
          for (std::size_t s = subtrees * r / parts; s < subtrees * (r + 1) / parts; ++s) {
            const Seed& root = split_level > 0 ? tops[b][s] : key.root();
            mem_bounded_subtree(key, table, ex, root, split_level, s * span_leaves, chunk, mem, partial[t]);
          }
          calls.fetch_add(ex.calls(), std::memory_order_relaxed);
        });
        for (std::size_t b = 0; b < nb; ++b) {
          result.shares[g0 + b] = tree_reduce({partial.begin() + static_cast<std::ptrdiff_t>(b * parts),
                                               partial.begin() + static_cast<std::ptrdiff_t>((b + 1) * parts)});
        }
        break;
      }

      case Strategy::LevelByLevel: {
        const std::uint64_t need = nb * (leaves + leaves / 2) * sizeof(Seed);
        if (need > memory_budget_) {
          throw CapacityError("level-by-level batch of " + std::to_string(nb) + " needs " +
                              std::to_string(need) + " bytes, budget is " + std::to_string(memory_budget_));
        }
        std::vector<NodeBuffer> cur;
        for (const auto& key : group) {
          cur.emplace_back(mem, 1);
          cur.back()[0] = key.root();
        }
        for (unsigned level = 1; level <= depth; ++level) {
          const std::size_t parents = std::size_t{1} << (level - 1);
          std::vector<NodeBuffer> next;
          for (std::size_t b = 0; b < nb; ++b) next.emplace_back(mem, 2 * parents);
          const std::size_t total = nb * parents;
          const std::size_t jobs = std::min<std::size_t>(plan.workers, total);
          pool_.run(jobs, [&](std::size_t r) {
            std::uint64_t local = 0;
            for (std::size_t p = total * r / jobs; p < total * (r + 1) / jobs; ++p) {
              const std::size_t b = p / parents, j = p % parents;
              const DpfKey& key = group[b];
              prf::Expander kex(key.prf());
              next[b][2 * j] = key.descend(kex, cur[b][j], level, 0);
              next[b][2 * j + 1] = key.descend(kex, cur[b][j], level, 1);
              local += kex.calls();
            }
            calls.fetch_add(local, std::memory_order_relaxed);
          });
          cur = std::move(next);
        }
        // Unfused product over the materialized leaf vectors.
        const auto [n, parts] = split_workers(nb, plan.workers, leaves);
        std::vector<ResponseShare> partial(nb * parts, ResponseShare(table.row_words, 0));
        pool_.for_each(plan.workers, nb * parts, [&](std::size_t t) {
          const std::size_t b = t / parts, r = t % parts;
          for (std::uint64_t j = leaves * r / parts; j < leaves * (r + 1) / parts; ++j) {
            masked_xor(partial[t], table.row(j), cur[b][j].low_bit());
          }
        });
        for (std::size_t b = 0; b < nb; ++b) {
          result.shares[g0 + b] = tree_reduce({partial.begin() + static_cast<std::ptrdiff_t>(b * parts),
                                               partial.begin() + static_cast<std::ptrdiff_t>((b + 1) * parts)});
        }
        break;
      }

      case Strategy::SingleQueryCooperative: {
        const std::uint64_t need = (leaves / 2 + leaves / 4) * sizeof(Seed);
        if (need > memory_budget_) throw CapacityError("cooperative frontier exceeds memory budget");
        const DpfKey& key = group[0];
        NodeBuffer frontier(mem, 1);
        frontier[0] = key.root();
        const std::size_t jobs_cap = plan.workers;
        // Levels 1..depth-1 are materialized; the leaf level is fused.
        for (unsigned level = 1; level < depth; ++level) {
          const std::size_t parents = frontier.size();
          NodeBuffer next(mem, 2 * parents);
          const std::size_t jobs = std::min(jobs_cap, parents);
          pool_.run(jobs, [&](std::size_t r) {
            prf::Expander ex(key.prf());
            for (std::size_t j = parents * r / jobs; j < parents * (r + 1) / jobs; ++j) {
              next[2 * j] = key.descend(ex, frontier[j], level, 0);
              next[2 * j + 1] = key.descend(ex, frontier[j], level, 1);
            }
            calls.fetch_add(ex.calls(), std::memory_order_relaxed);
          });
          frontier = std::move(next);
        }
        const std::size_t parents = frontier.size();
        const std::size_t jobs = std::min(jobs_cap, parents);
        std::vector<ResponseShare> partial(jobs, ResponseShare(table.row_words, 0));
        pool_.run(jobs, [&](std::size_t r) {
          prf::Expander ex(key.prf());
          for (std::size_t j = parents * r / jobs; j < parents * (r + 1) / jobs; ++j) {
            for (unsigned c = 0; c < 2; ++c) {
              const Seed leaf = key.descend(ex, frontier[j], depth, c);
              masked_xor(partial[r], table.row(2 * j + c), leaf.low_bit());
            }
          }
          calls.fetch_add(ex.calls(), std::memory_order_relaxed);
        });
        result.shares[g0] = tree_reduce(std::move(partial));
        break;
      }
    }
  }

  result.cost.prf_calls = calls.load();
  result.cost.peak_intermediate_bytes = mem.peak();
  result.cost.responses_bytes = keys.size() * table.row_bytes();
  result.cost.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start);
  return result;
}

namespace {

SingleResult single(BatchResult r) { return {std::move(r.shares.front()), r.cost}; }

}  // namespace

SingleResult Engine::eval_branch_parallel(const DpfKey& key, const TableView& table, std::size_t workers) {
  return single(eval_batch(std::span(&key, 1), table, {Strategy::BranchParallel, 1, kDefaultChunk, workers}));
}

SingleResult Engine::eval_level_by_level(const DpfKey& key, const TableView& table, std::size_t workers) {
  return single(eval_batch(std::span(&key, 1), table, {Strategy::LevelByLevel, 1, kDefaultChunk, workers}));
}

SingleResult Engine::eval_mem_bounded(const DpfKey& key, const TableView& table, std::uint64_t chunk_k,
                                      std::size_t workers) {
  return single(eval_batch(std::span(&key, 1), table, {Strategy::MemBoundedTree, 1, chunk_k, workers}));
}

SingleResult Engine::eval_cooperative_single(const DpfKey& key, const TableView& table,
                                             std::size_t workers) {
  return single(
      eval_batch(std::span(&key, 1), table, {Strategy::SingleQueryCooperative, 1, kDefaultChunk, workers}));
}

PartitionedResult Engine::eval_partitioned(const DpfKey& key, const TableView& table,
                                           std::span<const RowRange> shards, std::size_t workers) {
  check_domain(key, table);
  if (workers == 0) throw ConfigError("worker count must be >= 1");
  std::vector<RowRange> sorted(shards.begin(), shards.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::uint64_t expect = 0;
  for (const auto& s : sorted) {
    if (s.count == 0 || s.first != expect) throw ConfigError("shards overlap or leave a gap");
    expect = s.first + s.count;
  }
  if (expect != table.rows) throw ConfigError("shards do not cover the table");

  const auto start = Clock::now();
  PartitionedResult out;
  out.partials.assign(shards.size(), ResponseShare(table.row_words, 0));
  out.shard_prf_calls.assign(shards.size(), 0);
  pool_.for_each(workers, shards.size(), [&](std::size_t s) {
    prf::Expander ex(key.prf());
    visit_range(key, table, ex, key.root(), 0, 0, shards[s].first, shards[s].first + shards[s].count,
                out.partials[s]);
    out.shard_prf_calls[s] = ex.calls();
  });
  out.share = tree_reduce(out.partials);
  for (auto c : out.shard_prf_calls) out.cost.prf_calls += c;
  out.cost.peak_intermediate_bytes = std::min<std::uint64_t>(workers, shards.size()) *
                                     (key.domain().depth() + 1) * sizeof(Seed);
  out.cost.responses_bytes = table.row_bytes();
  out.cost.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start);
  return out;
}

}  // namespace dpir::engine
