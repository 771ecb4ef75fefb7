#include "geofaas/tcp_runtime.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <random>
#include <stdexcept>
#include <utility>

namespace geofaas {

namespace {

std::uint64_t draw_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::int64_t steady_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

void set_nodelay(int fd) {
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

/// Splits "host:port"; an empty host means the wildcard address.
bool split_address(const std::string& address, std::string& node, std::string& service) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 == address.size()) return false;
  node = address.substr(0, colon);
  service = address.substr(colon + 1);
  return true;
}

}  // namespace

TcpRuntime::TcpRuntime(std::string host_name, std::uint64_t seed)
    : host_(std::move(host_name)), t0_ns_(steady_ns()), rng_(seed == 0 ? draw_seed() : seed) {}

TcpRuntime::~TcpRuntime() {
  for (auto& [id, c] : conns_) {
    if (c.fd >= 0) ::close(c.fd);
  }
  for (int fd : listeners_) ::close(fd);
}

std::int64_t TcpRuntime::now_ms() const { return (steady_ns() - t0_ns_) / 1000000; }

std::uint64_t TcpRuntime::schedule(std::int64_t delay_ms, std::function<void()> fn) {
  const std::uint64_t id = next_timer_++;
  timers_[id] = Timer{now_ms() + std::max<std::int64_t>(0, delay_ms), std::move(fn)};
  return id;
}

void TcpRuntime::cancel(std::uint64_t timer_id) { timers_.erase(timer_id); }

ConnId TcpRuntime::connect(const std::string& address) {
  const ConnId id = next_conn_++;
  Conn c;

  std::string node, service;
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (!split_address(address, node, service) ||
      ::getaddrinfo(node.empty() ? "127.0.0.1" : node.c_str(), service.c_str(), &hints, &res) !=
          0) {
    c.dead_on_open = true;  // reported asynchronously, never from inside connect()
    conns_.emplace(id, std::move(c));
    return id;
  }

  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    set_nonblocking(fd);
    set_nodelay(fd);
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0 || errno == EINPROGRESS) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);

  if (fd < 0) {
    c.dead_on_open = true;
  } else {
    c.fd = fd;  // handshake completion is observed via POLLOUT in the pump
  }
  conns_.emplace(id, std::move(c));
  return id;
}

void TcpRuntime::send(ConnId conn, std::string bytes) {
  const auto it = conns_.find(conn);
  if (it == conns_.end() || it->second.closing) return;
  it->second.out += bytes;
  if (it->second.established) flush(conn);
}

void TcpRuntime::close(ConnId conn) {
  const auto it = conns_.find(conn);
  if (it == conns_.end()) return;
  Conn& c = it->second;
  if (c.fd < 0 || (c.established && c.out.empty())) {
    if (c.fd >= 0) ::close(c.fd);
    conns_.erase(it);
    return;
  }
  // Still connecting or bytes still queued: flush first, then tear down.
  c.closing = true;
}

std::uint16_t TcpRuntime::listen(const std::string& address) {
  std::string node, service;
  if (!split_address(address, node, service)) {
    throw std::runtime_error("listen address must be host:port, got '" + address + "'");
  }
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const int rc =
      ::getaddrinfo(node.empty() ? nullptr : node.c_str(), service.c_str(), &hints, &res);
  if (rc != 0) {
    throw std::runtime_error("cannot resolve listen address '" + address +
                             "': " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) {
    throw std::runtime_error("cannot listen on '" + address + "': " + std::strerror(errno));
  }
  set_nonblocking(fd);
  listeners_.push_back(fd);

  sockaddr_storage bound{};
  socklen_t blen = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &blen);
  if (bound.ss_family == AF_INET6) {
    return ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port);
  }
  return ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
}

void TcpRuntime::run() {
  stopped_.store(false, std::memory_order_relaxed);
  while (!stopped_.load(std::memory_order_relaxed)) poll_once(200);
}

bool TcpRuntime::run_until(const std::function<bool()>& done, std::int64_t cap_ms) {
  stopped_.store(false, std::memory_order_relaxed);
  const std::int64_t give_up = cap_ms < 0 ? -1 : now_ms() + cap_ms;
  while (!stopped_.load(std::memory_order_relaxed)) {
    if (done()) return true;
    if (give_up >= 0 && now_ms() > give_up) return false;
    poll_once(50);
  }
  return done();
}

std::int64_t TcpRuntime::next_deadline() const {
  std::int64_t best = -1;
  for (const auto& [id, t] : timers_) {
    if (best < 0 || t.deadline < best) best = t.deadline;
  }
  return best;
}

void TcpRuntime::fire_due_timers() {
  const std::int64_t now = now_ms();
  std::vector<std::uint64_t> due;
  for (const auto& [id, t] : timers_) {
    if (t.deadline <= now) due.push_back(id);
  }
  for (std::uint64_t id : due) {
    const auto it = timers_.find(id);
    if (it == timers_.end()) continue;  // cancelled by an earlier callback
    std::function<void()> fn = std::move(it->second.fn);
    timers_.erase(it);
    fn();
  }
}

void TcpRuntime::poll_once(std::int64_t max_wait_ms) {
  fire_due_timers();

  // Deliver async connect() failures and finish deferred closes.
  std::vector<ConnId> doomed, drained;
  for (auto& [id, c] : conns_) {
    if (c.dead_on_open) doomed.push_back(id);
    if (c.closing && c.established && c.out.empty()) drained.push_back(id);
  }
  for (ConnId id : doomed) destroy(id, true);
  for (ConnId id : drained) destroy(id, false);

  std::int64_t wait = max_wait_ms;
  const std::int64_t deadline = next_deadline();
  if (deadline >= 0) wait = std::min(wait, std::max<std::int64_t>(0, deadline - now_ms()));

  std::vector<pollfd> fds;
  std::vector<ConnId> fd_conn;  // parallel to fds entries past the listeners
  fds.reserve(listeners_.size() + conns_.size());
  for (int fd : listeners_) fds.push_back({fd, POLLIN, 0});
  for (const auto& [id, c] : conns_) {
    if (c.fd < 0) continue;
    short events = 0;
    if (c.established && !c.closing) events |= POLLIN;
    if (!c.established || !c.out.empty()) events |= POLLOUT;
    if (events == 0) continue;
    fds.push_back({c.fd, events, 0});
    fd_conn.push_back(id);
  }

  const int n = ::poll(fds.data(), fds.size(), static_cast<int>(wait));
  if (n <= 0) return;

  for (std::size_t i = 0; i < listeners_.size(); ++i) {
    if (fds[i].revents & POLLIN) accept_pending(fds[i].fd);
  }
  for (std::size_t i = listeners_.size(); i < fds.size(); ++i) {
    const ConnId id = fd_conn[i - listeners_.size()];
    const short re = fds[i].revents;
    if (re == 0) continue;
    if (conns_.find(id) == conns_.end()) continue;  // torn down by an earlier callback
    if (re & (POLLOUT | POLLERR | POLLHUP)) handle_writable(id);
    if (conns_.find(id) == conns_.end()) continue;
    if (re & POLLIN) handle_readable(id);
  }
}

void TcpRuntime::accept_pending(int listen_fd) {
  for (;;) {
    const int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd < 0) return;
    set_nonblocking(fd);
    set_nodelay(fd);
    const ConnId id = next_conn_++;
    Conn c;
    c.fd = fd;
    c.established = true;
    conns_.emplace(id, std::move(c));
    if (client_ != nullptr) client_->on_accept(id);
  }
}

void TcpRuntime::handle_writable(ConnId id) {
  Conn& c = conns_.at(id);
  if (!c.established) {
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(c.fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      destroy(id, !c.closing);
      return;
    }
    c.established = true;
    if (c.closing) {  // closed before the handshake finished: flush and go
      if (flush(id) && conns_.at(id).out.empty()) destroy(id, false);
      return;
    }
    if (client_ != nullptr) client_->on_open(id);
    if (conns_.find(id) == conns_.end()) return;  // closed inside on_open
  }
  if (!flush(id)) return;
  Conn& after = conns_.at(id);
  if (after.closing && after.out.empty()) destroy(id, false);
}

bool TcpRuntime::flush(ConnId id) {
  Conn& c = conns_.at(id);
  while (!c.out.empty()) {
    const ssize_t n = ::send(c.fd, c.out.data(), c.out.size(), MSG_NOSIGNAL);
    if (n > 0) {
      c.out.erase(0, static_cast<std::size_t>(n));
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) return true;
    destroy(id, !c.closing);  // peer reset; surface it unless we were closing anyway
    return false;
  }
  return true;
}

void TcpRuntime::handle_readable(ConnId id) {
  char buf[65536];
  for (;;) {
    const auto it = conns_.find(id);
    if (it == conns_.end() || it->second.closing) return;
    const ssize_t n = ::recv(it->second.fd, buf, sizeof buf, 0);
    if (n > 0) {
      if (client_ != nullptr) client_->on_data(id, std::string_view(buf, static_cast<std::size_t>(n)));
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) return;
    destroy(id, true);  // orderly shutdown (n == 0) or hard error
    return;
  }
}

void TcpRuntime::destroy(ConnId id, bool notify) {
  const auto it = conns_.find(id);
  if (it == conns_.end()) return;
  if (it->second.fd >= 0) ::close(it->second.fd);
  conns_.erase(it);
  if (notify && client_ != nullptr) client_->on_close(id);
}

}  // namespace geofaas
