// One PIR server party. Both parties run this same binary.
#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "dpir/errors.hpp"
#include "dpir/server.hpp"

using namespace dpir;

int main(int argc, char** argv) {
  CLI::App app{"DPF-PIR server"};
  std::string listen = "127.0.0.1:0";
  std::string tables_dir;
  std::string strategy;
  std::string prf_name;
  std::string role = "A";
  std::size_t workers = 1;
  std::size_t max_batch = 1;
  long max_delay_us = 2000;
  std::uint64_t mem_budget = engine::kDefaultMemoryBudget;
  app.add_option("--listen", listen, "host:port; port 0 picks one and prints it");
  app.add_option("--tables", tables_dir, "directory of .dptb tables")->required();
  app.add_option("--workers", workers)->check(CLI::PositiveNumber);
  app.add_option("--strategy", strategy, "branch-parallel | level-by-level | mem-bounded | cooperative");
  app.add_option("--max-batch", max_batch)->check(CLI::PositiveNumber);
  app.add_option("--max-delay-us", max_delay_us)->check(CLI::NonNegativeNumber);
  app.add_option("--prf", prf_name, "accept only keys under this PRF");
  app.add_option("--mem-budget-bytes", mem_budget);
  app.add_option("--role", role, "A or B; informational");
  CLI11_PARSE(app, argc, argv);

  // Handle SIGINT/SIGTERM synchronously below.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  try {
    service::ServerOptions opts;
    opts.workers = workers;
    opts.max_batch = max_batch;
    opts.max_delay = std::chrono::microseconds(max_delay_us);
    opts.memory_budget = mem_budget;
    if (!strategy.empty()) opts.strategy = engine::parse_strategy(strategy);
    if (!prf_name.empty()) opts.prf = prf::parse_prf(prf_name);

    auto tables = service::load_table_dir(tables_dir);
    service::Server server(std::move(tables), opts);
    auto ep = net::Endpoint::parse(listen);
    ep.port = server.bind(ep);
    server.start();
    std::cout << "listening " << ep.str() << " role " << role << std::endl;

    int sig = 0;
    sigwait(&sigs, &sig);
    server.stop();
  } catch (const std::exception& e) {
    std::cerr << "dpir_server: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
