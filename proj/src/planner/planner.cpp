#include "dpir/planner.hpp"

#include <algorithm>
#include <bit>
#include <string>
#include <unordered_set>

#include "dpir/errors.hpp"

namespace dpir::planner {
namespace {

std::vector<std::uint64_t> dedupe(std::span<const std::uint64_t> wanted) {
  std::vector<std::uint64_t> out;
  std::unordered_set<std::uint64_t> seen;
  for (auto w : wanted) {
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

const std::vector<std::uint64_t> kNone;

// Picks `count` distinct bins outside `used`.
std::vector<std::uint64_t> pick_free_bins(std::uint64_t num_bins, const std::vector<bool>& used,
                                          std::size_t count, RandomSource& rng) {
  std::vector<std::uint64_t> out;
  if (count == 0) return out;
  std::vector<std::uint64_t> free;
  for (std::uint64_t b = 0; b < num_bins; ++b) {
    if (!used[b]) free.push_back(b);
  }
  for (std::size_t k = 0; k < count; ++k) {
    const auto j = k + rng.uniform(free.size() - k);
    std::swap(free[k], free[j]);
    out.push_back(free[k]);
  }
  return out;
}

}  // namespace

BinConfig BinConfig::make(std::uint64_t table_entries, std::uint64_t bin_size) {
  if (bin_size < 2 || !std::has_single_bit(bin_size)) {
    throw ConfigError("bin size must be a power of two >= 2, got " + std::to_string(bin_size));
  }
  if (table_entries < bin_size || table_entries % bin_size != 0) {
    throw ConfigError("bin size " + std::to_string(bin_size) + " does not divide table of " +
                      std::to_string(table_entries));
  }
  return {bin_size, table_entries / bin_size};
}

std::size_t QueryPlan::hot_count() const {
  return static_cast<std::size_t>(
      std::count_if(slots.begin(), slots.end(), [](const Slot& s) { return s.source == Source::Hot; }));
}

std::uint64_t QueryPlan::request_bytes() const {
  std::uint64_t total = 0;
  for (const auto& s : slots) total += s.key_a.serialized_size();
  return total;
}

Planner::Planner(const PlannerConfig& config, const TableLayout& layout) : config_(config), layout_(layout) {
  if (layout.entry_bytes == 0 || layout.entry_bytes % 16 != 0) {
    throw ConfigError("entry width must be a positive multiple of 16");
  }
  if (layout.colocation > 0 && layout.companions == nullptr) {
    throw ConfigError("co-location needs a companion map");
  }
  if (layout.companions != nullptr && layout.companions->size() > layout.full_entries) {
    throw ConfigError("companion map larger than the table");
  }
  full_bins_ = BinConfig::make(layout.full_entries, config.full_bin_size);
  if (config.q_full > full_bins_.num_bins) {
    throw ConfigError("Q_full " + std::to_string(config.q_full) + " exceeds " +
                      std::to_string(full_bins_.num_bins) + " full-table bins");
  }
  if (config.q_hot > 0) {
    if (layout.hot_map == nullptr || layout.hot_entries == 0) {
      throw ConfigError("Q_hot > 0 without a hot table");
    }
    hot_bins_ = BinConfig::make(layout.hot_entries, config.hot_bin_size);
    if (config.q_hot > hot_bins_.num_bins) {
      throw ConfigError("Q_hot " + std::to_string(config.q_hot) + " exceeds " +
                        std::to_string(hot_bins_.num_bins) + " hot-table bins");
    }
  }
}

const std::vector<std::uint64_t>& Planner::companions_of(std::uint64_t i) const {
  if (layout_.colocation == 0 || layout_.companions == nullptr || i >= layout_.companions->size()) {
    return kNone;
  }
  return (*layout_.companions)[i];
}

Routing Planner::route(std::span<const std::uint64_t> wanted) const {
  for (auto w : wanted) {
    if (w >= layout_.full_entries) {
      throw RangeError("index " + std::to_string(w) + " outside table of " +
                       std::to_string(layout_.full_entries));
    }
  }
  Routing out;
  const auto distinct = dedupe(wanted);
  out.wanted_distinct = distinct.size();

  // Co-location: skip indices a planned row already carries.
  std::vector<std::uint64_t> lead, pending;
  std::unordered_set<std::uint64_t> carried;
  for (auto w : distinct) {
    if (carried.count(w) != 0) {
      pending.push_back(w);
      continue;
    }
    lead.push_back(w);
    for (auto c : companions_of(w)) carried.insert(c);
  }

  std::vector<bool> hot_used(hot_bins_.num_bins, false);
  std::vector<bool> full_used(full_bins_.num_bins, false);
  std::size_t hot_taken = 0, full_taken = 0;
  std::unordered_set<std::uint64_t> delivered;  // carried by a served row
  auto try_serve = [&](std::uint64_t w) {
    if (config_.q_hot > 0) {
      if (auto r = layout_.hot_map->find(w)) {
        const auto b = hot_bins_.bin_of(*r);
        if (hot_taken < config_.q_hot && !hot_used[b]) {
          hot_used[b] = true;
          ++hot_taken;
          out.queries.push_back({Source::Hot, w, *r});
          return true;
        }
      }
    }
    const auto b = full_bins_.bin_of(w);
    if (full_taken < config_.q_full && !full_used[b]) {
      full_used[b] = true;
      ++full_taken;
      out.queries.push_back({Source::Full, w, w});
      return true;
    }
    return false;
  };
  auto serve = [&](std::uint64_t w, std::vector<std::uint64_t>& missed) {
    if (try_serve(w)) {
      out.served.push_back(w);
      for (auto c : companions_of(w)) delivered.insert(c);
    } else {
      missed.push_back(w);
    }
  };

  std::vector<std::uint64_t> missed;
  for (auto w : lead) serve(w, missed);
  // Indices whose carrier was dropped get a query of their own.
  for (auto w : pending) {
    if (delivered.count(w) != 0) {
      out.covered.push_back(w);
    } else {
      serve(w, missed);
    }
  }
  for (auto w : missed) {
    (delivered.count(w) != 0 ? out.covered : out.dropped).push_back(w);
  }
  return out;
}

QueryPlan Planner::plan(std::span<const std::uint64_t> wanted, RandomSource& rng) const {
  auto routing = route(wanted);
  QueryPlan plan;
  plan.served = std::move(routing.served);
  plan.covered = std::move(routing.covered);
  plan.dropped = std::move(routing.dropped);

  auto fill = [&](Source source, const BinConfig& bins, std::uint32_t budget) {
    std::vector<bool> used(bins.num_bins, false);
    const auto domain = dpf::DomainSpec::for_entries(bins.bin_size);
    std::vector<Slot> slots;
    for (const auto& q : routing.queries) {
      if (q.source != source) continue;
      const auto bin = bins.bin_of(q.row);
      used[bin] = true;
      auto [a, b] = dpf::gen(domain, config_.prf, bins.offset_of(q.row), rng);
      slots.push_back({source, bin, bins.offset_of(q.row), q.wanted, std::move(a), std::move(b)});
    }
    for (auto bin : pick_free_bins(bins.num_bins, used, budget - slots.size(), rng)) {
      const auto offset = rng.uniform(bins.bin_size);
      auto [a, b] = dpf::gen(domain, config_.prf, offset, rng);
      slots.push_back({source, bin, offset, kNoIndex, std::move(a), std::move(b)});
      ++plan.dummy_count;
    }
    std::sort(slots.begin(), slots.end(), [](const Slot& x, const Slot& y) { return x.bin < y.bin; });
    for (auto& s : slots) plan.slots.push_back(std::move(s));
  };
  if (config_.q_hot > 0) fill(Source::Hot, hot_bins_, config_.q_hot);
  fill(Source::Full, full_bins_, config_.q_full);
  return plan;
}

std::map<std::uint64_t, std::vector<std::uint8_t>> Planner::reconstruct(
    const QueryPlan& plan, std::span<const std::vector<std::uint8_t>> responses_a,
    std::span<const std::vector<std::uint8_t>> responses_b) const {
  if (responses_a.size() != plan.slots.size() || responses_b.size() != plan.slots.size()) {
    throw FormatError("expected " + std::to_string(plan.slots.size()) + " responses per server");
  }
  std::unordered_set<std::uint64_t> want(plan.served.begin(), plan.served.end());
  want.insert(plan.covered.begin(), plan.covered.end());

  const std::size_t width = layout_.row_bytes();
  const std::size_t d = layout_.entry_bytes;
  std::map<std::uint64_t, std::vector<std::uint8_t>> out;
  for (std::size_t s = 0; s < plan.slots.size(); ++s) {
    const auto& a = responses_a[s];
    const auto& b = responses_b[s];
    if (a.size() != width || b.size() != width) {
      throw FormatError("response share of " + std::to_string(a.size()) + "/" + std::to_string(b.size()) +
                        " bytes, expected " + std::to_string(width));
    }
    const auto& slot = plan.slots[s];
    if (!slot.real()) continue;
    std::vector<std::uint8_t> row(width);
    for (std::size_t k = 0; k < width; ++k) row[k] = a[k] ^ b[k];
    out[slot.wanted].assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(d));
    const auto& comp = companions_of(slot.wanted);
    for (std::size_t k = 0; k < comp.size() && k < layout_.colocation; ++k) {
      if (want.count(comp[k]) == 0 || out.count(comp[k]) != 0) continue;
      const auto first = row.begin() + static_cast<std::ptrdiff_t>((k + 1) * d);
      out[comp[k]].assign(first, first + static_cast<std::ptrdiff_t>(d));
    }
  }
  return out;
}

std::uint64_t Planner::prf_calls_per_plan(engine::Strategy strategy) const {
  std::uint64_t total = engine::expected_prf_calls(strategy, full_bins_.bin_size, config_.q_full);
  if (config_.q_hot > 0) total += engine::expected_prf_calls(strategy, hot_bins_.bin_size, config_.q_hot);
  return total;
}

std::uint64_t Planner::comm_bytes_per_plan() const {
  auto bytes = [](std::uint64_t bin_size) {
    return dpf::key_bytes_for_depth(static_cast<unsigned>(std::countr_zero(bin_size)));
  };
  std::uint64_t total = config_.q_full * bytes(full_bins_.bin_size);
  if (config_.q_hot > 0) total += config_.q_hot * bytes(hot_bins_.bin_size);
  return total;
}

double simulate_drop_rate(const table::AccessTrace& trace, const Planner& planner) {
  if (trace.empty()) throw ConfigError("drop-rate simulation needs a nonempty trace");
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& inference : trace) {
    if (inference.empty()) continue;
    const auto r = planner.route(inference);
    sum += static_cast<double>(r.dropped.size()) / static_cast<double>(r.wanted_distinct);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

}  // namespace dpir::planner
