#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <vector>

#include "dpir/planner.hpp"
#include "dpir/random.hpp"
#include "dpir/synthetic.hpp"
#include "dpir/table.hpp"

namespace dpir::oracle {

inline bool contains(const std::vector<std::uint64_t>& v, std::uint64_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

// Straightforward per-inference simulator, linear scans only.
struct OracleConfig {
  std::uint64_t full_bin = 0;
  std::uint32_t q_full = 0;
  std::uint64_t hot_bin = 0;
  std::uint32_t q_hot = 0;
  std::vector<std::uint64_t> hot;  // hot[r] = index stored in hot row r
  table::CompanionMap comp;        // empty when no co-location
};

inline double oracle_drop_rate(const table::AccessTrace& trace, const OracleConfig& c) {
  double total = 0;
  int n = 0;
  for (const auto& inf : trace) {
    std::vector<std::uint64_t> uniq;
    for (auto x : inf)
      if (!contains(uniq, x)) uniq.push_back(x);
    if (uniq.empty()) continue;
    auto comp = [&](std::uint64_t x) { return c.comp.empty() ? std::vector<std::uint64_t>{} : c.comp[x]; };

    std::vector<std::uint64_t> first, second;
    for (auto x : uniq) {
      bool carried = false;
      for (auto p : first) carried = carried || contains(comp(p), x);
      (carried ? second : first).push_back(x);
    }
    std::vector<std::uint64_t> hot_bins, full_bins, served, missed;
    auto attempt = [&](std::uint64_t x) {
      for (std::uint64_t r = 0; r < c.hot.size() && c.q_hot > 0; ++r) {
        if (c.hot[r] != x) continue;
        if (hot_bins.size() < c.q_hot && !contains(hot_bins, r / c.hot_bin)) {
          hot_bins.push_back(r / c.hot_bin);
          return true;
        }
      }
      if (full_bins.size() < c.q_full && !contains(full_bins, x / c.full_bin)) {
        full_bins.push_back(x / c.full_bin);
        return true;
      }
      return false;
    };
    auto got = [&](std::uint64_t x) {
      for (auto s : served)
        if (contains(comp(s), x)) return true;
      return false;
    };
    for (auto x : first) (attempt(x) ? served : missed).push_back(x);
    for (auto x : second) {
      if (got(x)) continue;
      (attempt(x) ? served : missed).push_back(x);
    }
    int dropped = 0;
    for (auto x : missed) dropped += got(x) ? 0 : 1;
    total += static_cast<double>(dropped) / static_cast<double>(uniq.size());
    ++n;
  }
  return n == 0 ? 0.0 : total / n;
}

// Random (trace, config) pairs checked against the planner; returns the
// trials that disagree.
inline std::vector<int> drop_rate_mismatches(std::uint64_t seed, int trials) {
  SeededRandom rng(seed);
  std::vector<int> bad;
  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t entries = std::uint64_t{1} << (5 + rng.uniform(6));
    table::ZipfTraceOptions opts;
    opts.num_entries = entries;
    opts.inferences = 20 + rng.uniform(60);
    opts.lookups_per_inference = 1 + rng.uniform(12);
    opts.exponent = 0.5 + 0.1 * static_cast<double>(rng.uniform(10));
    opts.block_size = rng.uniform(2) == 0 ? 0 : 4;
    opts.block_probability = 0.4;
    const auto trace = table::zipf_trace(opts, rng);

    OracleConfig oc;
    planner::PlannerConfig pc;
    pc.full_bin_size = oc.full_bin = std::uint64_t{1} << (1 + rng.uniform(std::countr_zero(entries)));
    pc.q_full = oc.q_full = static_cast<std::uint32_t>(1 + rng.uniform(entries / pc.full_bin_size));
    planner::TableLayout layout;
    layout.full_entries = entries;
    layout.entry_bytes = 16;
    table::HotIndexMap hot;
    const std::uint32_t c = static_cast<std::uint32_t>(rng.uniform(3));
    table::CompanionMap comp = table::top_companions(trace, entries, c);
    if (c > 0) {
      oc.comp = comp;
      layout.colocation = c;
      layout.companions = &comp;
    }
    if (rng.uniform(2) == 0) {
      const std::uint64_t h = std::uint64_t{1} << (1 + rng.uniform(3));
      oc.hot = table::most_frequent(trace, entries, h);
      std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
      for (std::uint64_t r = 0; r < h; ++r) pairs.emplace_back(oc.hot[r], r);
      hot = table::HotIndexMap(pairs);
      layout.hot_entries = h;
      layout.hot_map = &hot;
      pc.hot_bin_size = oc.hot_bin = std::uint64_t{1} << (1 + rng.uniform(std::countr_zero(h)));
      pc.q_hot = oc.q_hot = static_cast<std::uint32_t>(1 + rng.uniform(h / pc.hot_bin_size));
    }
    const planner::Planner planner(pc, layout);
    if (planner::simulate_drop_rate(trace, planner) != oracle_drop_rate(trace, oc)) bad.push_back(trial);
  }
  return bad;
}

}  // namespace dpir::oracle
