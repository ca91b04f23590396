#include "dpir/bench.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <thread>

#include "dpir/client.hpp"
#include "dpir/errors.hpp"
#include "dpir/server.hpp"
#include "dpir/synthetic.hpp"

namespace dpir::bench {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

struct Keys {
  std::vector<dpf::DpfKey> a, b;
  std::vector<std::uint64_t> targets;
};

Keys make_keys(std::uint64_t entries, std::size_t n, prf::PrfId prf, RandomSource& rng) {
  Keys k;
  const auto domain = dpf::DomainSpec::for_entries(entries);
  for (std::size_t i = 0; i < n; ++i) {
    const auto target = rng.uniform(entries);
    auto [a, b] = dpf::gen(domain, prf, target, rng);
    k.a.push_back(std::move(a));
    k.b.push_back(std::move(b));
    k.targets.push_back(target);
  }
  return k;
}

}  // namespace

std::string machine_fingerprint() {
  return "cpus=" + std::to_string(std::thread::hardware_concurrency()) +
         " aesni=" + (prf::detail::aes_hw_available() ? "1" : "0");
}

std::vector<KernelRow> run_kernel_sweep(const KernelSweepSpec& spec) {
  if (spec.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  std::vector<KernelRow> rows;
  engine::Engine eng(std::max<std::size_t>(1, spec.workers), spec.memory_budget);
  for (auto entries : spec.entries) {
    SeededRandom rng(spec.seed ^ entries);
    const auto tbl = table::random_table(1, entries, spec.entry_bytes, rng);
    const std::size_t max_batch = *std::max_element(spec.batches.begin(), spec.batches.end());
    const auto keys = make_keys(tbl.num_entries(), max_batch, spec.prf, rng);
    for (auto strategy : spec.strategies) {
      for (auto batch : spec.batches) {
        std::vector<std::uint64_t> chunks{0};
        if (strategy == engine::Strategy::MemBoundedTree) chunks = spec.chunks;
        for (auto k : chunks) {
          if (strategy == engine::Strategy::MemBoundedTree && k > tbl.num_entries()) continue;
          KernelRow row;
          row.entries = tbl.num_entries();
          row.strategy = strategy;
          row.batch = batch;
          row.chunk = k;
          row.workers = spec.workers;
          row.expected_prf_calls = engine::expected_prf_calls(strategy, tbl.num_entries(), batch);
          if (strategy == engine::Strategy::MemBoundedTree) {
            row.peak_bound = engine::mem_bounded_peak_bound(tbl.num_entries(), k, batch);
          } else if (strategy == engine::Strategy::LevelByLevel) {
            row.peak_bound = batch * tbl.num_entries() * 16;
          }
          engine::EvalPlan plan{strategy, strategy == engine::Strategy::SingleQueryCooperative ? 1 : batch,
                                k == 0 ? std::min(engine::kDefaultChunk, tbl.num_entries()) : k, spec.workers};
          std::span<const dpf::DpfKey> ks(keys.a.data(), batch);
          std::vector<double> times;
          try {
            for (int rep = 0; rep < spec.repetitions; ++rep) {
              const auto t0 = Clock::now();
              const auto r = eng.eval_batch(ks, tbl.view(), plan);
              times.push_back(ms_since(t0));
              row.prf_calls = r.cost.prf_calls;
              row.peak_bytes = r.cost.peak_intermediate_bytes;
            }
            row.status = "ok";
            row.latency_ms = median(times);
            row.qps = row.latency_ms > 0 ? 1000.0 * static_cast<double>(batch) / row.latency_ms : 0;
          } catch (const CapacityError&) {
            row.status = "capacity";
          }
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

void write_kernel_csv(std::ostream& out, const std::vector<KernelRow>& rows) {
  const auto machine = machine_fingerprint();
  out << "entries,strategy,batch,chunk_k,workers,status,prf_calls,expected_prf_calls,counters_match,"
         "peak_bytes,peak_bound,latency_ms,qps,machine\n";
  for (const auto& r : rows) {
    const bool match = r.status != "ok" || r.prf_calls == r.expected_prf_calls;
    out << r.entries << ',' << engine::to_string(r.strategy) << ',' << r.batch << ',' << r.chunk << ','
        << r.workers << ',' << r.status << ',' << r.prf_calls << ',' << r.expected_prf_calls << ','
        << (match ? 1 : 0) << ',' << r.peak_bytes << ',' << r.peak_bound << ',' << fmt(r.latency_ms) << ','
        << fmt(r.qps) << ',' << machine << '\n';
  }
}

std::vector<PrfRow> run_prf_sweep(const PrfSweepSpec& spec) {
  if (spec.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  SeededRandom rng(spec.seed);
  const auto tbl = table::random_table(1, spec.entries, spec.entry_bytes, rng);
  engine::Engine eng(std::max<std::size_t>(1, spec.workers));
  const auto plan = engine::select_strategy(tbl.num_entries(), spec.batch, engine::kDefaultMemoryBudget,
                                            spec.workers);
  std::vector<PrfRow> rows;
  double aes_qps = 0;
  for (auto id : prf::kAllPrfs) {
    SeededRandom krng(spec.seed + 1);  // same targets for every PRF
    const auto keys = make_keys(tbl.num_entries(), spec.batch, id, krng);
    PrfRow row;
    row.prf = id;
    row.entries = tbl.num_entries();
    row.batch = spec.batch;
    std::vector<double> times;
    engine::BatchResult ra;
    for (int rep = 0; rep < spec.repetitions; ++rep) {
      const auto t0 = Clock::now();
      ra = eng.eval_batch(keys.a, tbl.view(), plan);
      times.push_back(ms_since(t0));
    }
    const auto rb = eng.eval_batch(keys.b, tbl.view(), plan);
    row.prf_calls = ra.cost.prf_calls;
    row.correct = true;
    for (std::size_t k = 0; k < keys.targets.size(); ++k) {
      auto share = ra.shares[k];
      xor_into(share, rb.shares[k]);
      const auto want = tbl.view().row(keys.targets[k]);
      row.correct = row.correct && std::equal(share.begin(), share.end(), want.begin(), want.end());
    }
    row.latency_ms = median(times);
    row.qps = row.latency_ms > 0 ? 1000.0 * static_cast<double>(spec.batch) / row.latency_ms : 0;
    if (id == prf::PrfId::Aes128Ctr) aes_qps = row.qps;
    rows.push_back(row);
  }
  for (auto& r : rows) r.relative_to_aes = aes_qps > 0 ? r.qps / aes_qps : 0;
  return rows;
}

void write_prf_csv(std::ostream& out, const std::vector<PrfRow>& rows) {
  const auto machine = machine_fingerprint();
  out << "prf,entries,batch,prf_calls,latency_ms,qps,relative_to_aes,correct,machine\n";
  for (const auto& r : rows) {
    out << prf::to_string(r.prf) << ',' << r.entries << ',' << r.batch << ',' << r.prf_calls << ','
        << fmt(r.latency_ms) << ',' << fmt(r.qps) << ',' << fmt(r.relative_to_aes) << ',' << (r.correct ? 1 : 0)
        << ',' << machine << '\n';
  }
}

std::vector<EndToEndRow> run_end_to_end(const EndToEndSpec& spec) {
  SeededRandom rng(spec.seed);
  auto tbl = std::make_shared<const table::EmbeddingTable>(
      table::random_table(1, spec.entries, spec.entry_bytes, rng));
  planner::TableLayout layout;
  layout.full_entries = tbl->num_entries();
  layout.entry_bytes = spec.entry_bytes;
  const planner::Planner planner({spec.bin_size, spec.q_full, 0, 0, spec.prf}, layout);

  std::vector<EndToEndRow> rows;
  for (auto batch : spec.server_batches) {
    service::ServerOptions opts;
    opts.workers = spec.workers;
    opts.max_batch = batch;
    opts.strategy = spec.strategy;
    service::Server a({{1, tbl}}, opts), b({{1, tbl}}, opts);
    net::Endpoint ea, eb;
    ea.port = a.bind({"127.0.0.1", 0});
    eb.port = b.bind({"127.0.0.1", 0});
    a.start();
    b.start();

    EndToEndRow row;
    row.server_batch = batch;
    std::vector<double> times;
    SeededRandom prng(spec.seed + batch);
    for (std::size_t p = 0; p < spec.plans; ++p) {
      std::vector<std::uint64_t> wanted(spec.lookups_per_plan);
      for (auto& w : wanted) w = prng.uniform(spec.entries);
      const auto plan = planner.plan(wanted, prng);
      const auto t0 = Clock::now();
      const auto got = service::client_fetch(planner, plan, {1, std::nullopt}, ea, eb,
                                             {std::chrono::milliseconds(10000), 1});
      times.push_back(ms_since(t0));
      row.request_bytes = plan.request_bytes();
      row.response_bytes = plan.slots.size() * layout.row_bytes();
      for (const auto& [index, bytes] : got) {
        const auto want = tbl->row(index);
        for (std::size_t k = 0; k < bytes.size(); ++k) row.byte_errors += bytes[k] != want[k] ? 1 : 0;
        ++row.entries_checked;
      }
    }
    row.plans = spec.plans;
    row.p50_ms = median(times);
    row.max_ms = times.empty() ? 0 : *std::max_element(times.begin(), times.end());
    double sum = 0;
    for (auto t : times) sum += t;
    row.mean_ms = times.empty() ? 0 : sum / static_cast<double>(times.size());
    rows.push_back(row);
  }
  return rows;
}

void write_end_to_end_csv(std::ostream& out, const std::vector<EndToEndRow>& rows) {
  const auto machine = machine_fingerprint();
  out << "server_batch,plans,entries_checked,byte_errors,request_bytes,response_bytes,mean_ms,p50_ms,max_ms,"
         "machine\n";
  for (const auto& r : rows) {
    out << r.server_batch << ',' << r.plans << ',' << r.entries_checked << ',' << r.byte_errors << ','
        << r.request_bytes << ',' << r.response_bytes << ',' << fmt(r.mean_ms) << ',' << fmt(r.p50_ms) << ','
        << fmt(r.max_ms) << ',' << machine << '\n';
  }
}

CodesignReport run_codesign_sweep(const CodesignSpec& spec, const table::AccessTrace& trace) {
  if (trace.empty()) throw ConfigError("co-design sweep needs a nonempty trace");
  auto base = spec.baseline;
  base.hot_fractions = {0.0};
  base.q_hot = {0};
  base.hot_bin_sizes.clear();
  base.colocation = {0};
  CodesignReport r;
  r.baseline = planner::grid_search(trace, spec.entries, spec.entry_bytes, base, spec.constraints, spec.workers);
  r.codesign =
      planner::grid_search(trace, spec.entries, spec.entry_bytes, spec.codesign, spec.constraints, spec.workers);
  return r;
}

void write_codesign_csv(std::ostream& out, const CodesignReport& report) {
  out << "front," << planner::sweep_csv_header() << '\n';
  for (const auto& r : report.baseline.front) out << "baseline," << planner::to_csv_row(r) << '\n';
  for (const auto& r : report.codesign.front) out << "codesign," << planner::to_csv_row(r) << '\n';
}

std::vector<BudgetPoint> compare_fronts(const std::vector<planner::SweepResult>& baseline,
                                        const std::vector<planner::SweepResult>& codesign,
                                        const std::vector<std::pair<std::uint64_t, std::uint64_t>>& budgets) {
  auto best = [](const std::vector<planner::SweepResult>& front, std::uint64_t comm, std::uint64_t prf) {
    double b = 1.0;
    for (const auto& r : front) {
      if (r.comm_bytes <= comm && r.prf_calls <= prf) b = std::min(b, r.drop_rate);
    }
    return b;
  };
  std::vector<BudgetPoint> out;
  for (const auto& [comm, prf] : budgets) {
    out.push_back({comm, prf, best(baseline, comm, prf), best(codesign, comm, prf)});
  }
  return out;
}

table::AccessTrace default_codesign_trace(std::uint64_t entries, std::uint64_t seed) {
  SeededRandom rng(seed);
  table::ZipfTraceOptions opts;
  opts.num_entries = entries;
  opts.inferences = 300;
  opts.lookups_per_inference = 12;
  opts.exponent = 1.0;
  opts.block_size = 4;
  opts.block_probability = 0.3;
  return table::zipf_trace(opts, rng);
}

CodesignSpec default_codesign_spec(std::uint64_t entries) {
  CodesignSpec s;
  s.entries = entries;
  planner::Grid g;
  g.bin_sizes.clear();
  for (std::uint64_t b = 16; b <= entries / 4; b *= 4) g.bin_sizes.push_back(b);
  g.q_full.clear();
  for (std::uint32_t q = 2; q <= entries / 16; q *= 2) g.q_full.push_back(q);
  s.baseline = g;
  g.hot_fractions = {0.0, 0.01, 0.05};
  g.hot_bin_sizes = {16, 64};
  g.q_hot = {0, 4, 8};
  g.colocation = {0, 1, 3};
  s.codesign = g;
  return s;
}

}  // namespace dpir::bench
