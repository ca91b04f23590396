#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <tuple>

#include "dpir/errors.hpp"
#include "dpir/planner.hpp"
#include "dpir/thread_pool.hpp"
#include "json.hpp"

namespace dpir::planner {
namespace {

using json = nlohmann::json;

bool dominates(const SweepResult& a, const SweepResult& b) {
  const bool no_worse = a.prf_calls <= b.prf_calls && a.comm_bytes <= b.comm_bytes && a.drop_rate <= b.drop_rate;
  const bool better = a.prf_calls < b.prf_calls || a.comm_bytes < b.comm_bytes || a.drop_rate < b.drop_rate;
  return no_worse && better;
}

bool feasible(const SweepResult& r, const Constraints& c) {
  return r.comm_bytes <= c.max_comm_bytes && r.prf_calls <= c.max_prf_calls && r.drop_rate <= c.max_drop_rate;
}

template <typename T>
std::vector<T> list_or(const json& j, const char* name, std::vector<T> fallback) {
  if (!j.contains(name)) return fallback;
  const auto& v = j.at(name);
  if (!v.is_array()) return {v.get<T>()};
  return v.get<std::vector<T>>();
}

}  // namespace

std::vector<SweepResult> pareto_front(std::vector<SweepResult> results) {
  std::vector<SweepResult> front;
  for (std::size_t i = 0; i < results.size(); ++i) {
    bool beaten = false;
    for (std::size_t j = 0; j < results.size() && !beaten; ++j) {
      beaten = j != i && dominates(results[j], results[i]);
    }
    // Exact duplicates on all three axes: keep the first.
    for (const auto& f : front) {
      if (f.prf_calls == results[i].prf_calls && f.comm_bytes == results[i].comm_bytes &&
          f.drop_rate == results[i].drop_rate) {
        beaten = true;
      }
    }
    if (!beaten) front.push_back(results[i]);
  }
  std::stable_sort(front.begin(), front.end(), [](const SweepResult& a, const SweepResult& b) {
    return std::tie(a.drop_rate, a.prf_calls, a.comm_bytes) < std::tie(b.drop_rate, b.prf_calls, b.comm_bytes);
  });
  return front;
}

SweepOutcome grid_search(const table::AccessTrace& trace, std::uint64_t num_entries, std::uint32_t entry_bytes,
                         const Grid& grid, const Constraints& constraints, std::size_t workers) {
  if (trace.empty()) throw ConfigError("grid search needs a nonempty trace");
  const std::uint64_t padded = std::max<std::uint64_t>(2, std::bit_ceil(num_entries));

  // Shared per-(hot size) and per-C side data.
  std::vector<std::uint64_t> hot_sizes;
  for (double f : grid.hot_fractions) {
    if (f < 0.0 || f > 1.0) throw ConfigError("hot fraction outside [0, 1]");
    const auto h = static_cast<std::uint64_t>(std::llround(f * static_cast<double>(num_entries)));
    if (std::find(hot_sizes.begin(), hot_sizes.end(), h) == hot_sizes.end()) hot_sizes.push_back(h);
  }
  std::vector<table::HotIndexMap> hot_maps;
  for (auto h : hot_sizes) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
    if (h > 0) {
      const auto top = table::most_frequent(trace, num_entries, h);
      for (std::uint64_t r = 0; r < top.size(); ++r) pairs.emplace_back(top[r], r);
    }
    hot_maps.emplace_back(std::move(pairs));
  }
  std::vector<table::CompanionMap> companion_maps;
  for (auto c : grid.colocation) companion_maps.push_back(table::top_companions(trace, num_entries, c));

  struct Point {
    SweepConfig config;
    std::size_t hot_map;
    std::size_t companions;
  };
  std::vector<Point> points;
  std::size_t skipped = 0;
  for (auto bin : grid.bin_sizes)
    for (std::size_t hi = 0; hi < hot_sizes.size(); ++hi)
      for (auto qh : grid.q_hot)
        for (auto qf : grid.q_full)
          for (std::size_t ci = 0; ci < grid.colocation.size(); ++ci)
            for (auto b : grid.batch)
              for (auto k : grid.chunk_k)
                for (auto s : grid.strategies) {
                  const auto hot = hot_sizes[hi];
                  const std::uint64_t hot_padded = hot == 0 ? 0 : std::max<std::uint64_t>(2, std::bit_ceil(hot));
                  std::vector<std::uint64_t> hot_bins = grid.hot_bin_sizes;
                  if (hot_bins.empty()) hot_bins = {std::min(bin, hot_padded)};
                  if (qh == 0) hot_bins = {0};
                  for (auto hb : hot_bins) {
                    const bool valid = bin <= padded && qf <= padded / std::max<std::uint64_t>(1, bin) &&
                                       (qh == 0 || (hot > 0 && hb >= 2 && hb <= hot_padded &&
                                                    qh <= hot_padded / hb)) &&
                                       (qh > 0 || hot == 0);
                    if (!valid) {
                      ++skipped;
                      continue;
                    }
                    points.push_back(
                        {{bin, hot, qh > 0 ? hb : 0, qh, qf, grid.colocation[ci], b, std::min(k, bin), s}, hi, ci});
                  }
                }

  SweepOutcome out;
  out.skipped = skipped;
  std::vector<std::optional<SweepResult>> results(points.size());
  ThreadPool pool(std::max<std::size_t>(1, workers));
  pool.for_each(workers, points.size(), [&](std::size_t p) {
    const auto& pt = points[p];
    const auto& cfg = pt.config;
    TableLayout layout;
    layout.full_entries = padded;
    layout.entry_bytes = entry_bytes;
    layout.colocation = cfg.colocation;
    layout.companions = &companion_maps[pt.companions];
    if (cfg.q_hot > 0) {
      layout.hot_entries = std::max<std::uint64_t>(2, std::bit_ceil(cfg.hot_size));
      layout.hot_map = &hot_maps[pt.hot_map];
    }
    try {
      const Planner planner({cfg.bin_size, cfg.q_full, cfg.hot_bin_size, cfg.q_hot, grid.prf}, layout);
      SweepResult r;
      r.config = cfg;
      r.prf_calls = planner.prf_calls_per_plan(cfg.strategy);
      r.comm_bytes = planner.comm_bytes_per_plan();
      r.peak_bytes = cfg.strategy == engine::Strategy::MemBoundedTree
                         ? engine::mem_bounded_peak_bound(cfg.bin_size, cfg.chunk_k, cfg.batch)
                         : cfg.batch * cfg.bin_size * 16;
      r.drop_rate = simulate_drop_rate(trace, planner);
      results[p] = r;
    } catch (const ConfigError&) {
    }
  });

  std::vector<SweepResult> ok;
  for (auto& r : results) {
    if (!r) {
      ++out.skipped;
      continue;
    }
    out.evaluated.push_back(*r);
    if (feasible(*r, constraints)) ok.push_back(*r);
  }
  out.infeasible = ok.empty();
  out.front = pareto_front(std::move(ok));
  return out;
}

std::string sweep_csv_header() {
  return "bin_size,hot_size,hot_bin_size,q_hot,q_full,colocation,batch,chunk_k,strategy,prf_calls,comm_bytes,"
         "drop_rate";
}

std::string to_csv_row(const SweepResult& r) {
  const auto& c = r.config;
  char rate[32];
  std::snprintf(rate, sizeof rate, "%.6f", r.drop_rate);
  return std::to_string(c.bin_size) + "," + std::to_string(c.hot_size) + "," + std::to_string(c.hot_bin_size) +
         "," + std::to_string(c.q_hot) + "," + std::to_string(c.q_full) + "," + std::to_string(c.colocation) +
         "," + std::to_string(c.batch) + "," + std::to_string(c.chunk_k) + "," +
         std::string(engine::to_string(c.strategy)) + "," + std::to_string(r.prf_calls) + "," +
         std::to_string(r.comm_bytes) + "," + rate;
}

PlannerConfig planner_config_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    PlannerConfig c;
    c.full_bin_size = j.at("full_bin_size").get<std::uint64_t>();
    c.q_full = j.at("q_full").get<std::uint32_t>();
    c.hot_bin_size = j.value("hot_bin_size", std::uint64_t{0});
    c.q_hot = j.value("q_hot", std::uint32_t{0});
    if (j.contains("prf")) c.prf = prf::parse_prf(j.at("prf").get<std::string>());
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("plan config: ") + e.what());
  }
}

std::string planner_config_to_json(const PlannerConfig& c) {
  json j{{"full_bin_size", c.full_bin_size},
         {"q_full", c.q_full},
         {"hot_bin_size", c.hot_bin_size},
         {"q_hot", c.q_hot},
         {"prf", std::string(prf::to_string(c.prf))}};
  return j.dump(2);
}

std::pair<Grid, Constraints> grid_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    Grid g;
    g.bin_sizes = list_or(j, "bin_sizes", g.bin_sizes);
    g.hot_fractions = list_or(j, "hot_fractions", g.hot_fractions);
    g.hot_bin_sizes = list_or(j, "hot_bin_sizes", g.hot_bin_sizes);
    g.q_hot = list_or(j, "q_hot", g.q_hot);
    g.q_full = list_or(j, "q_full", g.q_full);
    g.colocation = list_or(j, "colocation", g.colocation);
    g.batch = list_or(j, "batch", g.batch);
    g.chunk_k = list_or(j, "chunk_k", g.chunk_k);
    if (j.contains("strategies")) {
      g.strategies.clear();
      for (const auto& s : list_or<std::string>(j, "strategies", {})) g.strategies.push_back(engine::parse_strategy(s));
    }
    if (j.contains("prf")) g.prf = prf::parse_prf(j.at("prf").get<std::string>());
    Constraints c;
    if (j.contains("constraints")) {
      const auto& k = j.at("constraints");
      c.max_comm_bytes = k.value("max_comm_bytes", c.max_comm_bytes);
      c.max_prf_calls = k.value("max_prf_calls", c.max_prf_calls);
      c.max_drop_rate = k.value("max_drop_rate", c.max_drop_rate);
    }
    return {g, c};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid config: ") + e.what());
  }
}

}  // namespace dpir::planner
