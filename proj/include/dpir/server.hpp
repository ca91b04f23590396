#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "dpir/engine.hpp"
#include "dpir/net.hpp"
#include "dpir/table.hpp"

namespace dpir::service {

struct ServerOptions {
  std::size_t workers = 1;
  std::optional<engine::Strategy> strategy;  // unset: select_strategy per bin size
  std::size_t max_batch = 1;
  std::chrono::microseconds max_delay{2000};
  std::optional<prf::PrfId> prf;  // when set, keys under other PRFs are refused
  std::uint64_t memory_budget = engine::kDefaultMemoryBudget;
};

using TableSet = std::map<std::uint32_t, std::shared_ptr<const table::EmbeddingTable>>;

// Every *.dptb file in `dir`, keyed by table id. Throws ConfigError on
// duplicate ids or an empty directory.
TableSet load_table_dir(const std::filesystem::path& dir);

// Groups pending keys per (table, bin, depth) and hands each group to the
// engine as one batch once it holds max_batch keys or its oldest key has
// waited max_delay.
class Batcher {
 public:
  // share on success, otherwise an error message.
  using Done = std::function<void(std::vector<std::uint8_t> share, std::string error)>;

  Batcher(engine::Engine& engine, const ServerOptions& options);
  ~Batcher();
  Batcher(const Batcher&) = delete;
  Batcher& operator=(const Batcher&) = delete;

  void submit(std::uint32_t table_id, std::uint64_t bin, TableView view, dpf::DpfKey key, Done done);

  std::uint64_t batches() const { return batches_.load(); }
  std::uint64_t keys() const { return keys_.load(); }

 private:
  using GroupKey = std::tuple<std::uint32_t, std::uint64_t, unsigned>;
  struct Group {
    TableView view;
    std::vector<dpf::DpfKey> keys;
    std::vector<Done> done;
    std::chrono::steady_clock::time_point deadline;
  };

  void dispatch(Group group);
  void timer_loop();

  engine::Engine& engine_;
  ServerOptions options_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<GroupKey, Group> pending_;
  bool stop_ = false;
  std::thread timer_;
  std::atomic<std::uint64_t> batches_{0};
  std::atomic<std::uint64_t> keys_{0};
};

class Server {
 public:
  Server(TableSet tables, const ServerOptions& options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Returns the bound port.
  std::uint16_t bind(const net::Endpoint& ep);
  // Accept loop; returns after stop().
  void serve();
  void start();  // serve() on a background thread
  void stop();

  const Batcher& batcher() const { return batcher_; }

 private:
  struct Connection;
  void handle_connection(std::shared_ptr<Connection> conn);
  void handle_frame(const std::shared_ptr<Connection>& conn, const net::Frame& frame);

  TableSet tables_;
  ServerOptions options_;
  engine::Engine engine_;
  Batcher batcher_;
  net::Socket listener_;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex conn_mu_;
  std::vector<std::shared_ptr<Connection>> connections_;
  std::vector<std::thread> conn_threads_;
};

}  // namespace dpir::service
