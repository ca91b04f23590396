#include "dpir/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fcntl.h>

#include <cerrno>
#include <cstring>

#include "dpir/errors.hpp"

namespace dpir::net {
namespace {

[[noreturn]] void fail(const std::string& what) {
  throw ServiceError(what + ": " + std::strerror(errno));
}

int remaining_ms(std::optional<Clock::time_point> deadline) {
  if (!deadline) return -1;
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(left);
}

void wait_for(int fd, short events, std::optional<Clock::time_point> deadline) {
  pollfd p{fd, events, 0};
  for (;;) {
    const int n = ::poll(&p, 1, remaining_ms(deadline));
    if (n > 0) return;
    if (n == 0) throw ServiceError("timed out");
    if (errno != EINTR) fail("poll");
  }
}

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  const std::string host = ep.host.empty() || ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
      throw ServiceError("cannot resolve " + host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
  }
  return addr;
}

}  // namespace

Endpoint Endpoint::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw ConfigError("endpoint '" + text + "' is not host:port");
  Endpoint ep;
  if (colon > 0) ep.host = text.substr(0, colon);
  try {
    const auto port = std::stoul(text.substr(colon + 1));
    if (port > 65535) throw ConfigError("port out of range in '" + text + "'");
    ep.port = static_cast<std::uint16_t>(port);
  } catch (const std::logic_error&) {
    throw ConfigError("bad port in '" + text + "'");
  }
  return ep;
}

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = std::exchange(o.fd_, -1);
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::write_all(std::span<const std::uint8_t> bytes) {
  while (!bytes.empty()) {
    const auto n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("send");
    }
    bytes = bytes.subspan(static_cast<std::size_t>(n));
  }
}

bool Socket::read_exact(std::span<std::uint8_t> out, std::optional<Clock::time_point> deadline) {
  std::size_t got = 0;
  while (got < out.size()) {
    if (deadline) wait_for(fd_, POLLIN, deadline);
    const auto n = ::recv(fd_, out.data() + got, out.size() - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("recv");
    }
    if (n == 0) {
      if (got == 0) return false;
      throw ServiceError("connection closed mid-frame");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

Socket connect_to(const Endpoint& ep, Clock::time_point deadline) {
  const auto addr = resolve(ep);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0));
  if (!s.valid()) fail("socket");
  if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    if (errno != EINPROGRESS) fail("connect to " + ep.str());
    wait_for(s.fd(), POLLOUT, deadline);
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      errno = err;
      fail("connect to " + ep.str());
    }
  }
  // Back to blocking; reads use poll for deadlines.
  const int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  const int flags = ::fcntl(s.fd(), F_GETFL);
  ::fcntl(s.fd(), F_SETFL, flags & ~O_NONBLOCK);
  return s;
}

Socket listen_on(const Endpoint& ep, int backlog) {
  const auto addr = resolve(ep);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) fail("socket");
  const int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) fail("bind " + ep.str());
  if (::listen(s.fd(), backlog) != 0) fail("listen");
  return s;
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) fail("getsockname");
  return ntohs(addr.sin_port);
}

void send_frame(Socket& s, wire::MsgType type, std::span<const std::uint8_t> payload) {
  s.write_all(wire::encode_frame(type, payload));
}

std::optional<Frame> recv_frame(Socket& s, std::optional<Clock::time_point> deadline) {
  std::array<std::uint8_t, wire::kHeaderBytes> head{};
  if (!s.read_exact(head, deadline)) return std::nullopt;
  const auto h = wire::decode_header(head);
  Frame f;
  f.type = h.msg_type;
  f.payload.resize(h.payload_len);
  if (h.payload_len > 0 && !s.read_exact(f.payload, deadline)) throw ServiceError("connection closed mid-frame");
  return f;
}

}  // namespace dpir::net
