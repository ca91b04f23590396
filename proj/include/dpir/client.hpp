#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpir/net.hpp"
#include "dpir/planner.hpp"
#include "dpir/wire.hpp"

namespace dpir::service {

struct ClientOptions {
  std::chrono::milliseconds timeout{300};  // per attempt, both servers
  int retries = 1;
};

struct TableIds {
  std::uint32_t full = 0;
  std::optional<std::uint32_t> hot;
};

// Throws ServiceError (including server Error frames) or FormatError.
wire::TableInfo fetch_table_info(const net::Endpoint& ep, std::uint32_t table_id,
                                 std::chrono::milliseconds timeout = std::chrono::milliseconds{1000});

// Sends every query over one connection and returns the shares in query
// order. Responses may arrive in any order.
std::vector<std::vector<std::uint8_t>> exchange(const net::Endpoint& ep, const std::vector<wire::Query>& queries,
                                                net::Clock::time_point deadline);

// Party A keys to server A, party B keys to server B, concurrently; each side
// is retried `retries` times before the call fails. Nothing is
// reconstructed unless both sides answered every slot.
std::map<std::uint64_t, std::vector<std::uint8_t>> client_fetch(const planner::Planner& planner,
                                                                 const planner::QueryPlan& plan, const TableIds& ids,
                                                                 const net::Endpoint& server_a,
                                                                 const net::Endpoint& server_b,
                                                                 const ClientOptions& options = {});

// Client-side view of a deployment: planner settings, table ids and
// sidecar files (paths relative to the config file).
struct ClientConfig {
  planner::PlannerConfig planner;
  TableIds tables;
  std::uint32_t colocation = 0;
  std::string hot_map_path;
  std::string companions_path;
  std::chrono::milliseconds timeout{300};
};

ClientConfig load_client_config(const std::filesystem::path& path);

// Everything needed to plan against live servers: sidecars plus table
// geometry fetched from server A.
class ClientSession {
 public:
  ClientSession(const ClientConfig& config, const net::Endpoint& server_a, const net::Endpoint& server_b);

  const planner::Planner& planner() const { return *planner_; }
  std::map<std::uint64_t, std::vector<std::uint8_t>> fetch(std::span<const std::uint64_t> wanted,
                                                           RandomSource& rng) const;
  // Re-plans the indices still missing until all are retrieved. Throws
  // ServiceError if a round makes no progress.
  std::map<std::uint64_t, std::vector<std::uint8_t>> fetch_all(std::span<const std::uint64_t> wanted,
                                                               RandomSource& rng) const;

 private:
  ClientConfig config_;
  net::Endpoint a_, b_;
  table::HotIndexMap hot_map_;
  table::CompanionMap companions_;
  std::unique_ptr<planner::Planner> planner_;
};

}  // namespace dpir::service
