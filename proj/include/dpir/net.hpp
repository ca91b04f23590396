#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpir/wire.hpp"

namespace dpir::net {

using Clock = std::chrono::steady_clock;

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port" or ":port". Throws ConfigError.
  static Endpoint parse(const std::string& text);
  std::string str() const { return host + ":" + std::to_string(port); }
};

// Owning TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close();
  void shutdown();

  // Throw ServiceError on failure or when the deadline passes.
  void write_all(std::span<const std::uint8_t> bytes);
  // false on clean EOF before the first byte.
  bool read_exact(std::span<std::uint8_t> out, std::optional<Clock::time_point> deadline = std::nullopt);

 private:
  int fd_ = -1;
};

Socket connect_to(const Endpoint& ep, Clock::time_point deadline);

// Binds and listens; port 0 picks a free port.
Socket listen_on(const Endpoint& ep, int backlog = 128);
std::uint16_t local_port(const Socket& s);

struct Frame {
  std::uint8_t type = 0;
  std::vector<std::uint8_t> payload;
};

void send_frame(Socket& s, wire::MsgType type, std::span<const std::uint8_t> payload);
// nullopt on clean EOF. Throws FormatError on a bad header, ServiceError on I/O.
std::optional<Frame> recv_frame(Socket& s, std::optional<Clock::time_point> deadline = std::nullopt);

}  // namespace dpir::net
