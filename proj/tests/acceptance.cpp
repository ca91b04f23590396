// End-to-end acceptance run: one PASS/FAIL line per criterion.
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dpir/bench.hpp"
#include "dpir/client.hpp"
#include "dpir/dpf.hpp"
#include "dpir/engine.hpp"
#include "dpir/planner.hpp"
#include "dpir/synthetic.hpp"
#include "dpir/table.hpp"
#include "drop_oracle.hpp"

extern char** environ;

using namespace dpir;
using engine::Strategy;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::uint64_t> combine(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  auto out = a;
  xor_into(out, b);
  return out;
}

std::vector<std::uint64_t> row_words(const table::EmbeddingTable& t, std::uint64_t i) {
  const auto r = t.view().row(i);
  return {r.begin(), r.end()};
}

std::vector<std::uint64_t> unfused(const dpf::DpfKey& key, const TableView& tv) {
  return dpf::select_rows(dpf::eval_full(key), tv);
}

Outcome dpf_exhaustive() {
  SeededRandom rng(1);
  std::uint64_t checked = 0;
  for (unsigned depth = 1; depth <= 12; ++depth) {
    const auto dom = dpf::DomainSpec::for_depth(depth);
    for (std::uint64_t i = 0; i < dom.num_entries(); ++i) {
      const auto [a, b] = dpf::gen(dom, prf::kDefaultPrf, i, rng);
      const auto la = dpf::eval_full(a);
      const auto lb = dpf::eval_full(b);
      for (std::uint64_t j = 0; j < dom.num_entries(); ++j) {
        if ((la[j] ^ lb[j]) != (j == i ? kBeta : Seed{})) {
          return {false, "L=" + std::to_string(dom.num_entries()) + " i=" + std::to_string(i) +
                             " j=" + std::to_string(j)};
        }
      }
      ++checked;
    }
  }
  return {true, std::to_string(checked) + " (L, i) pairs, L = 2..4096"};
}

Outcome oracle_equivalence() {
  SeededRandom rng(2);
  engine::Engine eng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::uint64_t entries = std::uint64_t{1} << (1 + rng.uniform(12));
    const auto bytes = static_cast<std::uint32_t>(16 * (1 + rng.uniform(8)));
    const auto tab = table::random_table(7, entries, bytes, rng);
    const auto tv = tab.view();
    const std::uint64_t i = rng.uniform(entries);
    const auto [ka, kb] = dpf::gen(tab.domain(), prf::kDefaultPrf, i, rng);
    const auto plan = engine::select_strategy(entries, 1, engine::kDefaultMemoryBudget, 2);
    const std::vector<dpf::DpfKey> va{ka}, vb{kb};
    const auto dpf_row =
        combine(eng.eval_batch(va, tv, plan).shares[0], eng.eval_batch(vb, tv, plan).shares[0]);
    const auto [sa, sb] = dpf::naive_pir_shares(tab.domain(), i, rng);
    const auto naive_row = combine(dpf::naive_pir_answer(sa, tv), dpf::naive_pir_answer(sb, tv));
    const auto plain = row_words(tab, i);
    if (dpf_row != plain || naive_row != plain) {
      return {false, "triple " + std::to_string(t) + " L=" + std::to_string(entries)};
    }
  }
  return {true, "1000 triples byte-exact"};
}

Outcome key_sizes() {
  SeededRandom rng(3);
  std::ostringstream d;
  bool ok = true;
  for (auto [depth, want] : {std::pair{14u, 896u}, {20u, 1280u}, {22u, 1408u}}) {
    const auto dom = dpf::DomainSpec::for_depth(depth);
    const auto [a, b] = dpf::gen(dom, prf::kDefaultPrf, rng.uniform(dom.num_entries()), rng);
    const auto sa = dpf::serialize_key(a).size() - dpf::DpfKey::kHeaderBytes;
    const auto sb = dpf::serialize_key(b).size() - dpf::DpfKey::kHeaderBytes;
    ok = ok && sa == want && sb == want;
    d << "2^" << depth << ":" << sa << "B ";
  }
  return {ok, d.str() + "codeword payload"};
}

Outcome work_laws() {
  SeededRandom rng(4);
  engine::Engine eng(2);
  const std::size_t batch = 2;
  std::ostringstream d;
  for (unsigned depth : {10u, 14u, 18u}) {
    const std::uint64_t entries = std::uint64_t{1} << depth;
    const auto tab = table::random_table(1, entries, 16, rng);
    std::vector<dpf::DpfKey> keys;
    for (std::size_t b = 0; b < batch; ++b) keys.push_back(dpf::gen(tab.domain(), prf::kDefaultPrf, rng.uniform(entries), rng).first);
    for (Strategy s : engine::kAllStrategies) {
      engine::EvalPlan plan{s, s == Strategy::SingleQueryCooperative ? 1u : batch, 128, 2};
      const auto got = eng.eval_batch(keys, tab.view(), plan).cost.prf_calls;
      const std::uint64_t want = s == Strategy::BranchParallel ? batch * entries * depth : batch * (2 * entries - 2);
      if (got != want) {
        return {false, std::string(engine::to_string(s)) + " L=2^" + std::to_string(depth) + " got " +
                           std::to_string(got) + " want " + std::to_string(want)};
      }
    }
    d << "2^" << depth << " ";
  }
  return {true, d.str() + "B=2, all strategies exact"};
}

Outcome memory_laws() {
  SeededRandom rng(5);
  engine::Engine eng(2);
  const std::uint64_t entries = std::uint64_t{1} << 14, k = 128;
  const auto tab = table::random_table(1, entries, 16, rng);
  std::ostringstream d;
  bool ok = true;
  for (std::size_t batch : {1u, 16u, 64u}) {
    std::vector<dpf::DpfKey> keys;
    for (std::size_t b = 0; b < batch; ++b) keys.push_back(dpf::gen(tab.domain(), prf::kDefaultPrf, rng.uniform(entries), rng).first);
    const auto lbl = eng.eval_batch(keys, tab.view(), {Strategy::LevelByLevel, batch, k, 2}).cost.peak_intermediate_bytes;
    const auto mb = eng.eval_batch(keys, tab.view(), {Strategy::MemBoundedTree, batch, k, 2}).cost.peak_intermediate_bytes;
    const std::uint64_t floor = batch * entries * 16;
    const std::uint64_t ceiling = batch * k * 14 * 16 + 4096;
    ok = ok && lbl >= floor && mb <= ceiling;
    d << "B=" << batch << " lbl " << lbl << ">=" << floor << " mb " << mb << "<=" << ceiling << "; ";
  }
  return {ok, d.str()};
}

Outcome strategy_equivalence() {
  SeededRandom rng(6);
  engine::Engine eng(8);
  std::size_t runs = 0;
  for (int t = 0; t < 200; ++t) {
    const std::uint64_t entries = std::uint64_t{1} << (10 + rng.uniform(3));
    const auto bytes = static_cast<std::uint32_t>(16 * (1 + rng.uniform(4)));
    const auto tab = table::random_table(1, entries, bytes, rng);
    const auto tv = tab.view();
    std::vector<dpf::DpfKey> keys;
    for (int b = 0; b < 2; ++b) keys.push_back(dpf::gen(tab.domain(), prf::kDefaultPrf, rng.uniform(entries), rng).first);
    std::vector<engine::ResponseShare> want;
    for (const auto& key : keys) want.push_back(unfused(key, tv));
    for (Strategy s : engine::kAllStrategies) {
      for (std::size_t w : {1u, 2u, 8u}) {
        for (std::uint64_t k : {32u, 128u, 1024u}) {
          const engine::EvalPlan plan{s, s == Strategy::SingleQueryCooperative ? 1u : 2u, k, w};
          if (eng.eval_batch(keys, tv, plan).shares != want) {
            return {false, "case " + std::to_string(t) + " " + std::string(engine::to_string(s)) + " w=" +
                               std::to_string(w) + " K=" + std::to_string(k)};
          }
          ++runs;
        }
      }
    }
  }
  return {true, "200 cases, " + std::to_string(runs) + " evaluations identical to the unfused reference"};
}

Outcome scheduler_rule() {
  for (unsigned depth = 1; depth <= 30; ++depth) {
    const std::uint64_t entries = std::uint64_t{1} << depth;
    for (std::size_t batch : {1u, 64u}) {
      const bool coop =
          engine::select_strategy(entries, batch, engine::kDefaultMemoryBudget).strategy == Strategy::SingleQueryCooperative;
      if (coop != (entries > (std::uint64_t{1} << 22))) return {false, "L=2^" + std::to_string(depth)};
    }
  }
  return {true, "L = 2^1..2^30, cooperative exactly above 2^22"};
}

Outcome gen_efficiency() {
  SeededRandom rng(8);
  for (unsigned depth = 1; depth <= 22; ++depth) {
    const auto dom = dpf::DomainSpec::for_depth(depth);
    prf::CallCounter c;
    dpf::gen(dom, prf::kDefaultPrf, rng.uniform(dom.num_entries()), rng, &c);
    if (c.value() > 4 * depth) return {false, "depth " + std::to_string(depth) + ": " + std::to_string(c.value())};
  }
  const auto dom = dpf::DomainSpec::for_depth(20);
  prf::CallCounter g, e;
  const auto [a, b] = dpf::gen(dom, prf::kDefaultPrf, 12345, rng, &g);
  dpf::eval_full(a, &e);
  const double ratio = static_cast<double>(e.value()) / static_cast<double>(g.value());
  return {ratio >= 1e4, "gen <= 4 log L for L <= 2^22; eval/gen at 2^20 = " + std::to_string(ratio)};
}

Outcome leakage_shape() {
  SeededRandom rng(9);
  const std::uint64_t entries = 4096;
  table::ZipfTraceOptions opts;
  opts.num_entries = entries;
  opts.inferences = 1000;
  opts.lookups_per_inference = 16;
  opts.block_size = 4;
  opts.block_probability = 0.3;
  const auto trace = table::zipf_trace(opts, rng);
  const auto hot_rows = table::most_frequent(trace, entries, 256);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;
  for (std::uint64_t r = 0; r < hot_rows.size(); ++r) pairs.emplace_back(hot_rows[r], r);
  const table::HotIndexMap hot(pairs);
  const auto comp = table::top_companions(trace, entries, 1);
  planner::TableLayout layout;
  layout.full_entries = entries;
  layout.hot_entries = 256;
  layout.hot_map = &hot;
  layout.companions = &comp;
  layout.colocation = 1;
  layout.entry_bytes = 16;
  const planner::PlannerConfig cfg{256, 8, 32, 4, prf::kDefaultPrf};
  const planner::Planner p(cfg, layout);
  std::set<std::uint64_t> totals;
  for (int n = 0; n < 1000; ++n) {
    // Vary the request size too: from nothing to more than the budget.
    const auto& inf = trace[rng.uniform(trace.size())];
    const std::vector<std::uint64_t> wanted(inf.begin(), inf.begin() + static_cast<long>(rng.uniform(inf.size() + 1)));
    const auto plan = p.plan(wanted, rng);
    std::uint64_t bytes = 0;
    for (const auto& s : plan.slots) bytes += dpf::serialize_key(s.key_a).size();
    if (plan.slots.size() != cfg.q_hot + cfg.q_full || plan.hot_count() != cfg.q_hot || bytes != plan.request_bytes()) {
      return {false, "request " + std::to_string(n)};
    }
    totals.insert(bytes);
  }
  return {totals.size() == 1, "12 keys, " + std::to_string(*totals.begin()) + " B per server on all 1000 plans"};
}

Outcome drop_semantics() {
  const auto bad = oracle::drop_rate_mismatches(10, 100);
  planner::TableLayout layout;
  layout.full_entries = 64;
  layout.entry_bytes = 16;
  const planner::Planner p({64, 1}, layout);
  const double hand = planner::simulate_drop_rate({{3, 40}}, p);
  return {bad.empty() && hand == 0.5,
          std::to_string(100 - bad.size()) + "/100 pairs exact; hand case " + std::to_string(hand)};
}

Outcome codesign_benefit() {
  const std::uint64_t entries = std::uint64_t{1} << 14;
  const auto trace = bench::default_codesign_trace(entries, 11);
  auto spec = bench::default_codesign_spec(entries);
  spec.workers = std::max(1u, std::thread::hardware_concurrency());
  const auto report = bench::run_codesign_sweep(spec, trace);
  std::set<std::pair<std::uint64_t, std::uint64_t>> budgets;
  std::uint64_t max_comm = 0, max_prf = 0;
  for (const auto* front : {&report.baseline.front, &report.codesign.front}) {
    for (const auto& r : *front) {
      budgets.insert({r.comm_bytes, r.prf_calls});
      max_comm = std::max(max_comm, r.comm_bytes);
      max_prf = std::max(max_prf, r.prf_calls);
    }
  }
  budgets.insert({max_comm, max_prf});
  const auto pts = bench::compare_fronts(report.baseline.front, report.codesign.front, {budgets.begin(), budgets.end()});
  double best_gap = 0, max_gap = 0;
  const bench::BudgetPoint* witness = nullptr;
  for (const auto& pt : pts) {
    const double gap = pt.baseline - pt.codesign;
    max_gap = std::max(max_gap, gap);
    // A budget that forces drops on the baseline and where both fronts have a point.
    if (pt.baseline < 1.0 && pt.baseline > 0 && gap > best_gap) {
      best_gap = gap;
      witness = &pt;
    }
  }
  const auto& last = pts.back();
  const double final_gap = last.baseline - last.codesign;
  std::ostringstream d;
  if (witness != nullptr) {
    d << "comm<=" << witness->max_comm_bytes << " prf<=" << witness->max_prf_calls << ": baseline "
      << witness->baseline << " vs co-design " << witness->codesign << "; ";
  }
  d << "largest budget: " << last.baseline << " vs " << last.codesign << " (gap " << final_gap << ", max gap "
    << max_gap << ")";
  const bool converges = std::abs(final_gap) <= 0.01 && final_gap < max_gap;
  return {witness != nullptr && converges, d.str()};
}

// One dpir_server child; the listening line on stdout carries the port.
class ServerProcess {
 public:
  ServerProcess(const std::filesystem::path& tables, std::size_t max_batch, const char* role) {
    int fds[2];
    if (pipe(fds) != 0) throw std::runtime_error("pipe failed");
    std::vector<std::string> args{DPIR_SERVER_PATH, "--tables", tables.string(), "--workers", "2",
                                  "--max-batch", std::to_string(max_batch), "--role", role};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, fds[1], 1);
    posix_spawn_file_actions_addclose(&fa, fds[0]);
    posix_spawn_file_actions_addclose(&fa, fds[1]);
    const int rc = posix_spawn(&pid_, argv[0], &fa, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    close(fds[1]);
    if (rc != 0) {
      close(fds[0]);
      throw std::runtime_error("cannot start " + args[0]);
    }
    FILE* out = fdopen(fds[0], "r");
    char line[256] = {};
    const bool got = std::fgets(line, sizeof line, out) != nullptr;
    std::fclose(out);
    std::istringstream in(got ? line : "");
    std::string word, addr;
    in >> word >> addr;
    if (word != "listening") throw std::runtime_error("server did not come up");
    endpoint_ = net::Endpoint::parse(addr);
  }
  ~ServerProcess() {
    kill(pid_, SIGTERM);
    waitpid(pid_, nullptr, 0);
  }
  ServerProcess(const ServerProcess&) = delete;
  ServerProcess& operator=(const ServerProcess&) = delete;
  const net::Endpoint& endpoint() const { return endpoint_; }

 private:
  pid_t pid_ = -1;
  net::Endpoint endpoint_;
};

Outcome end_to_end_service() {
  namespace fs = std::filesystem;
  const std::uint64_t entries = std::uint64_t{1} << 14;
  SeededRandom rng(12);
  const auto tab = table::random_table(1, entries, 256, rng);
  const fs::path dir = fs::temp_directory_path() / ("dpir_acceptance_" + std::to_string(getpid()));
  fs::create_directories(dir);
  table::store_table(tab, dir / "full.dptb");
  std::set<std::uint64_t> pick;
  while (pick.size() < 100) pick.insert(rng.uniform(entries));
  const std::vector<std::uint64_t> wanted(pick.begin(), pick.end());

  std::ostringstream d;
  bool ok = true;
  for (std::size_t max_batch : {1u, 64u}) {
    ServerProcess a(dir, max_batch, "A"), b(dir, max_batch, "B");
    service::ClientConfig cfg;
    cfg.planner.full_bin_size = 1024;
    cfg.planner.q_full = 16;
    cfg.tables.full = tab.table_id();
    cfg.timeout = std::chrono::milliseconds(300);
    const service::ClientSession session(cfg, a.endpoint(), b.endpoint());

    // Four concurrent clients so the batched server has something to merge.
    std::mutex mu;
    std::map<std::uint64_t, std::vector<std::uint8_t>> got;
    std::chrono::nanoseconds slowest{0};
    std::string error;
    std::vector<std::thread> clients;
    for (std::size_t c = 0; c < 4; ++c) {
      clients.emplace_back([&, c] {
        SeededRandom crng(100 + c + max_batch);
        std::vector<std::uint64_t> todo(wanted.begin() + static_cast<long>(25 * c),
                                        wanted.begin() + static_cast<long>(25 * (c + 1)));
        try {
          for (int round = 0; !todo.empty() && round < 64; ++round) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto part = session.fetch(todo, crng);
            const auto dt = std::chrono::steady_clock::now() - t0;
            std::lock_guard lock(mu);
            slowest = std::max(slowest, std::chrono::duration_cast<std::chrono::nanoseconds>(dt));
            for (const auto& [i, bytes] : part) got[i] = bytes;
            std::erase_if(todo, [&](std::uint64_t i) { return part.count(i) != 0; });
          }
        } catch (const std::exception& e) {
          std::lock_guard lock(mu);
          error = e.what();
        }
      });
    }
    for (auto& t : clients) t.join();
    std::size_t errors = 0;
    for (auto i : wanted) {
      const auto it = got.find(i);
      const auto want = tab.row(i);
      if (it == got.end() || !std::equal(want.begin(), want.end(), it->second.begin(), it->second.end())) ++errors;
    }
    const double slow_ms = std::chrono::duration<double, std::milli>(slowest).count();
    ok = ok && error.empty() && errors == 0 && slow_ms <= 300.0;
    d << "B=" << max_batch << ": " << got.size() << " rows, " << errors << " byte errors, slowest plan " << slow_ms
      << " ms" << (error.empty() ? "" : " (" + error + ")") << "; ";
  }
  fs::remove_all(dir);
  return {ok, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"dpf exhaustive correctness", dpf_exhaustive},
      {"dpf-pir = naive pir = plaintext", oracle_equivalence},
      {"key sizes", key_sizes},
      {"work laws", work_laws},
      {"memory laws", memory_laws},
      {"strategy equivalence", strategy_equivalence},
      {"scheduler rule", scheduler_rule},
      {"gen efficiency", gen_efficiency},
      {"leakage shape", leakage_shape},
      {"drop semantics", drop_semantics},
      {"co-design benefit", codesign_benefit},
      {"end-to-end service", end_to_end_service},
  };
  int failed = 0;
  for (std::size_t n = 0; n < criteria.size(); ++n) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[n].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::printf("%s %2zu %-32s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", n + 1, criteria[n].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
