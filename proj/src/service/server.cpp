#include "dpir/server.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <bit>

#include "dpir/errors.hpp"
#include "dpir/wire.hpp"

namespace dpir::service {

using wire::ErrorCode;
using wire::MsgType;

TableSet load_table_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("no table directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".dptb") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  TableSet out;
  for (const auto& f : files) {
    auto t = std::make_shared<const table::EmbeddingTable>(table::load_table(f));
    const auto id = t->table_id();
    if (!out.emplace(id, std::move(t)).second) {
      throw ConfigError("duplicate table id " + std::to_string(id) + " in " + dir.string());
    }
  }
  if (out.empty()) throw ConfigError("no .dptb tables in " + dir.string());
  return out;
}

// ---- batcher

Batcher::Batcher(engine::Engine& engine, const ServerOptions& options) : engine_(engine), options_(options) {
  if (options_.max_batch == 0) throw ConfigError("max batch must be >= 1");
  timer_ = std::thread([this] { timer_loop(); });
}

Batcher::~Batcher() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  timer_.join();
}

void Batcher::submit(std::uint32_t table_id, std::uint64_t bin, TableView view, dpf::DpfKey key, Done done) {
  if (options_.max_batch == 1 || options_.max_delay.count() == 0) {
    Group g{view, {}, {}, {}};
    g.keys.push_back(std::move(key));
    g.done.push_back(std::move(done));
    dispatch(std::move(g));
    return;
  }
  std::unique_lock lock(mu_);
  const GroupKey gk{table_id, bin, key.domain().depth()};
  auto [it, fresh] = pending_.try_emplace(gk);
  auto& g = it->second;
  if (fresh) {
    g.view = view;
    g.deadline = std::chrono::steady_clock::now() + options_.max_delay;
  }
  g.keys.push_back(std::move(key));
  g.done.push_back(std::move(done));
  if (g.keys.size() >= options_.max_batch) {
    Group full = std::move(g);
    pending_.erase(it);
    lock.unlock();
    dispatch(std::move(full));
    return;
  }
  if (fresh) cv_.notify_all();
}

void Batcher::timer_loop() {
  std::unique_lock lock(mu_);
  for (;;) {
    if (pending_.empty()) {
      if (stop_) return;
      cv_.wait(lock);
      continue;
    }
    auto next = std::chrono::steady_clock::time_point::max();
    for (const auto& [k, g] : pending_) next = std::min(next, g.deadline);
    if (!stop_ && std::chrono::steady_clock::now() < next) {
      cv_.wait_until(lock, next);
      continue;
    }
    std::vector<Group> due;
    const auto now = std::chrono::steady_clock::now();
    for (auto it = pending_.begin(); it != pending_.end();) {
      if (stop_ || it->second.deadline <= now) {
        due.push_back(std::move(it->second));
        it = pending_.erase(it);
      } else {
        ++it;
      }
    }
    lock.unlock();
    for (auto& g : due) dispatch(std::move(g));
    lock.lock();
  }
}

void Batcher::dispatch(Group group) {
  const std::uint64_t bin_size = group.view.rows;
  engine::EvalPlan plan;
  if (options_.strategy) {
    plan.strategy = *options_.strategy;
    plan.batch_size = plan.strategy == engine::Strategy::SingleQueryCooperative ? 1 : group.keys.size();
    plan.chunk_k = std::min(engine::kDefaultChunk, bin_size);
    plan.workers = options_.workers;
  } else {
    plan = engine::select_strategy(bin_size, group.keys.size(), options_.memory_budget, options_.workers);
  }
  batches_.fetch_add(1);
  keys_.fetch_add(group.keys.size());
  try {
    auto result = engine_.eval_batch(group.keys, group.view, plan);
    for (std::size_t k = 0; k < group.keys.size(); ++k) {
      const auto bytes = engine::as_bytes(result.shares[k]);
      group.done[k]({bytes.begin(), bytes.end()}, {});
    }
  } catch (const std::exception& e) {
    for (auto& d : group.done) d({}, e.what());
  }
}

// ---- server

struct Server::Connection {
  net::Socket sock;
  std::mutex write_mu;
  std::atomic<bool> finished{false};

  void send(MsgType type, const std::vector<std::uint8_t>& payload) {
    std::lock_guard lock(write_mu);
    try {
      net::send_frame(sock, type, payload);
    } catch (const ServiceError&) {
      // peer gone; nothing to report to
    }
  }
  void error(std::uint64_t id, ErrorCode code, std::string msg) {
    send(MsgType::Error, wire::encode(wire::Error{id, code, std::move(msg)}));
  }
};

Server::Server(TableSet tables, const ServerOptions& options)
    : tables_(std::move(tables)),
      options_(options),
      engine_(std::max<std::size_t>(1, options.workers), options.memory_budget),
      batcher_(engine_, options) {}

Server::~Server() { stop(); }

std::uint16_t Server::bind(const net::Endpoint& ep) {
  listener_ = net::listen_on(ep);
  return net::local_port(listener_);
}

void Server::start() {
  accept_thread_ = std::thread([this] { serve(); });
}

void Server::serve() {
  if (!listener_.valid()) throw ServiceError("server not bound");
  while (!stopping_.load()) {
    const int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (stopping_.load()) break;
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    auto conn = std::make_shared<Connection>();
    conn->sock = net::Socket(fd);
    std::lock_guard lock(conn_mu_);
    // Reap connections whose reader has exited.
    for (std::size_t i = 0; i < connections_.size();) {
      if (connections_[i]->finished.load()) {
        conn_threads_[i].join();
        connections_.erase(connections_.begin() + static_cast<std::ptrdiff_t>(i));
        conn_threads_.erase(conn_threads_.begin() + static_cast<std::ptrdiff_t>(i));
      } else {
        ++i;
      }
    }
    connections_.push_back(conn);
    conn_threads_.emplace_back([this, conn] { handle_connection(conn); });
  }
}

void Server::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conn_mu_);
    for (auto& c : connections_) c->sock.shutdown();
    threads.swap(conn_threads_);
  }
  for (auto& t : threads) t.join();
  listener_.close();
}

void Server::handle_connection(std::shared_ptr<Connection> conn) {
  for (;;) {
    std::optional<net::Frame> frame;
    try {
      frame = net::recv_frame(conn->sock);
    } catch (const std::exception&) {
      break;  // bad magic, bad version, I/O error: drop the connection
    }
    if (!frame) break;
    handle_frame(conn, *frame);
  }
  conn->sock.shutdown();
  conn->finished.store(true);
}

void Server::handle_frame(const std::shared_ptr<Connection>& conn, const net::Frame& frame) {
  switch (static_cast<MsgType>(frame.type)) {
    case MsgType::TableInfo: {
      std::uint32_t id = 0;
      try {
        id = wire::decode_info_request(frame.payload);
      } catch (const FormatError& e) {
        conn->error(0, ErrorCode::Malformed, e.what());
        return;
      }
      const auto it = tables_.find(id);
      if (it == tables_.end()) {
        conn->error(0, ErrorCode::UnknownTable, "unknown table " + std::to_string(id));
        return;
      }
      const auto& t = *it->second;
      conn->send(MsgType::TableInfo,
                 wire::encode(wire::TableInfo{id, t.num_entries(), t.logical_entries(), t.entry_bytes()}));
      return;
    }
    case MsgType::Query: {
      wire::Query q;
      try {
        q = wire::decode_query(frame.payload);
      } catch (const FormatError& e) {
        conn->error(0, ErrorCode::Malformed, e.what());
        return;
      }
      const auto it = tables_.find(q.table_id);
      if (it == tables_.end()) {
        conn->error(q.request_id, ErrorCode::UnknownTable, "unknown table " + std::to_string(q.table_id));
        return;
      }
      const auto& t = *it->second;
      std::optional<dpf::DpfKey> key;
      try {
        key = dpf::deserialize_key(q.key);
      } catch (const std::exception& e) {
        conn->error(q.request_id, ErrorCode::BadKey, e.what());
        return;
      }
      if (options_.prf && key->prf() != *options_.prf) {
        conn->error(q.request_id, ErrorCode::BadKey, "key PRF not served here");
        return;
      }
      const std::uint64_t bin_size = key->domain().num_entries();
      if (bin_size > t.num_entries()) {
        conn->error(q.request_id, ErrorCode::BadKey, "key domain larger than table");
        return;
      }
      if (q.bin_id >= t.num_entries() / bin_size) {
        conn->error(q.request_id, ErrorCode::BinOutOfRange, "bin " + std::to_string(q.bin_id) + " out of range");
        return;
      }
      const auto id = q.request_id;
      batcher_.submit(q.table_id, q.bin_id, t.bin_view(q.bin_id, bin_size), std::move(*key),
                      [conn, id](std::vector<std::uint8_t> share, std::string err) {
                        if (!err.empty()) {
                          conn->error(id, ErrorCode::Malformed, err);
                        } else {
                          conn->send(MsgType::Response, wire::encode(wire::Response{id, std::move(share)}));
                        }
                      });
      return;
    }
    default:
      conn->error(0, ErrorCode::Malformed, "unexpected message type " + std::to_string(frame.type));
  }
}

}  // namespace dpir::service
