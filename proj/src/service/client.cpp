#include "dpir/client.hpp"

#include <atomic>
#include <fstream>
#include <future>
#include <sstream>
#include <unordered_map>

#include "dpir/errors.hpp"
#include "json.hpp"

namespace dpir::service {
namespace {

std::atomic<std::uint64_t> next_request{1};

[[noreturn]] void raise_error_frame(const net::Frame& f) {
  const auto e = wire::decode_error(f.payload);
  throw ServiceError("server error " + std::to_string(static_cast<std::uint32_t>(e.code)) + ": " + e.message);
}

std::vector<std::vector<std::uint8_t>> exchange_with_retry(const net::Endpoint& ep,
                                                           const std::vector<wire::Query>& queries,
                                                           const ClientOptions& options) {
  for (int attempt = 0;; ++attempt) {
    try {
      return exchange(ep, queries, net::Clock::now() + options.timeout);
    } catch (const std::exception& e) {
      if (attempt >= options.retries) throw ServiceError(ep.str() + ": " + e.what());
    }
  }
}

}  // namespace

wire::TableInfo fetch_table_info(const net::Endpoint& ep, std::uint32_t table_id, std::chrono::milliseconds timeout) {
  const auto deadline = net::Clock::now() + timeout;
  auto sock = net::connect_to(ep, deadline);
  net::send_frame(sock, wire::MsgType::TableInfo, wire::encode_info_request(table_id));
  const auto f = net::recv_frame(sock, deadline);
  if (!f) throw ServiceError("connection closed by " + ep.str());
  if (f->type == static_cast<std::uint8_t>(wire::MsgType::Error)) raise_error_frame(*f);
  if (f->type != static_cast<std::uint8_t>(wire::MsgType::TableInfo)) throw FormatError("expected table info");
  return wire::decode_table_info(f->payload);
}

std::vector<std::vector<std::uint8_t>> exchange(const net::Endpoint& ep, const std::vector<wire::Query>& queries,
                                                net::Clock::time_point deadline) {
  auto sock = net::connect_to(ep, deadline);
  std::vector<std::uint8_t> out;
  std::unordered_map<std::uint64_t, std::size_t> slot_of;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto frame = wire::encode_frame(wire::MsgType::Query, wire::encode(queries[i]));
    out.insert(out.end(), frame.begin(), frame.end());
    slot_of[queries[i].request_id] = i;
  }
  sock.write_all(out);

  std::vector<std::vector<std::uint8_t>> shares(queries.size());
  std::vector<bool> have(queries.size(), false);
  std::size_t missing = queries.size();
  while (missing > 0) {
    const auto f = net::recv_frame(sock, deadline);
    if (!f) throw ServiceError("connection closed by " + ep.str());
    if (f->type == static_cast<std::uint8_t>(wire::MsgType::Error)) raise_error_frame(*f);
    if (f->type != static_cast<std::uint8_t>(wire::MsgType::Response)) throw FormatError("unexpected frame type");
    auto r = wire::decode_response(f->payload);
    const auto it = slot_of.find(r.request_id);
    if (it == slot_of.end() || have[it->second]) throw FormatError("unexpected request id");
    have[it->second] = true;
    shares[it->second] = std::move(r.share);
    --missing;
  }
  return shares;
}

std::map<std::uint64_t, std::vector<std::uint8_t>> client_fetch(const planner::Planner& planner,
                                                                 const planner::QueryPlan& plan, const TableIds& ids,
                                                                 const net::Endpoint& server_a,
                                                                 const net::Endpoint& server_b,
                                                                 const ClientOptions& options) {
  std::vector<wire::Query> qa, qb;
  const std::uint64_t base = next_request.fetch_add(plan.slots.size());
  for (std::size_t s = 0; s < plan.slots.size(); ++s) {
    const auto& slot = plan.slots[s];
    std::uint32_t table_id = ids.full;
    if (slot.source == planner::Source::Hot) {
      if (!ids.hot) throw ConfigError("plan has hot slots but no hot table id");
      table_id = *ids.hot;
    }
    const auto bin = static_cast<std::uint32_t>(slot.bin);
    qa.push_back({base + s, table_id, bin, dpf::serialize_key(slot.key_a)});
    qb.push_back({base + s, table_id, bin, dpf::serialize_key(slot.key_b)});
  }
  auto fa = std::async(std::launch::async, [&] { return exchange_with_retry(server_a, qa, options); });
  auto fb = std::async(std::launch::async, [&] { return exchange_with_retry(server_b, qb, options); });
  std::vector<std::vector<std::uint8_t>> ra, rb;
  std::exception_ptr err;
  try {
    ra = fa.get();
  } catch (...) {
    err = std::current_exception();
  }
  try {
    rb = fb.get();
  } catch (...) {
    if (!err) err = std::current_exception();
  }
  if (err) std::rethrow_exception(err);
  return planner.reconstruct(plan, ra, rb);
}

ClientConfig load_client_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ClientConfig c;
  c.planner = planner::planner_config_from_json(ss.str());
  try {
    const auto j = nlohmann::json::parse(ss.str());
    c.tables.full = j.value("full_table_id", std::uint32_t{0});
    if (j.contains("hot_table_id")) c.tables.hot = j.at("hot_table_id").get<std::uint32_t>();
    c.colocation = j.value("colocation", std::uint32_t{0});
    auto rel = [&](const std::string& p) {
      if (p.empty()) return p;
      const std::filesystem::path fp(p);
      return fp.is_absolute() ? p : (path.parent_path() / fp).string();
    };
    c.hot_map_path = rel(j.value("hot_map", std::string{}));
    c.companions_path = rel(j.value("companions", std::string{}));
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 300));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("client config: ") + e.what());
  }
  if (c.planner.q_hot > 0 && (!c.tables.hot || c.hot_map_path.empty())) {
    throw ConfigError("q_hot > 0 needs hot_table_id and hot_map");
  }
  if (c.colocation > 0 && c.companions_path.empty()) throw ConfigError("colocation needs a companions file");
  return c;
}

ClientSession::ClientSession(const ClientConfig& config, const net::Endpoint& server_a,
                             const net::Endpoint& server_b)
    : config_(config), a_(server_a), b_(server_b) {
  const auto full = fetch_table_info(a_, config_.tables.full);
  planner::TableLayout layout;
  layout.full_entries = full.num_entries;
  layout.colocation = config_.colocation;
  if (full.row_bytes % (config_.colocation + 1) != 0) throw ConfigError("row width not divisible by C+1");
  layout.entry_bytes = full.row_bytes / (config_.colocation + 1);
  if (config_.colocation > 0) {
    companions_ = table::decode_companion_map(table::read_file(config_.companions_path)).first;
    layout.companions = &companions_;
  }
  if (config_.planner.q_hot > 0) {
    const auto hot = fetch_table_info(a_, *config_.tables.hot);
    if (hot.row_bytes != full.row_bytes) throw ConfigError("hot and full tables differ in row width");
    hot_map_ = table::decode_hot_map(table::read_file(config_.hot_map_path));
    layout.hot_entries = hot.num_entries;
    layout.hot_map = &hot_map_;
  }
  planner_ = std::make_unique<planner::Planner>(config_.planner, layout);
}

std::map<std::uint64_t, std::vector<std::uint8_t>> ClientSession::fetch(std::span<const std::uint64_t> wanted,
                                                                        RandomSource& rng) const {
  const auto plan = planner_->plan(wanted, rng);
  return client_fetch(*planner_, plan, config_.tables, a_, b_, {config_.timeout, 1});
}

std::map<std::uint64_t, std::vector<std::uint8_t>> ClientSession::fetch_all(std::span<const std::uint64_t> wanted,
                                                                            RandomSource& rng) const {
  std::map<std::uint64_t, std::vector<std::uint8_t>> out;
  std::vector<std::uint64_t> left(wanted.begin(), wanted.end());
  while (!left.empty()) {
    auto got = fetch(left, rng);
    if (got.empty()) throw ServiceError("no progress retrieving " + std::to_string(left.size()) + " indices");
    std::vector<std::uint64_t> still;
    for (auto w : left) {
      if (got.count(w) == 0 && out.count(w) == 0) still.push_back(w);
    }
    out.merge(got);
    left = std::move(still);
  }
  return out;
}

}  // namespace dpir::service
