#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "geofaas/runtime.hpp"

namespace geofaas {

/// NodeRuntime over real TCP sockets: a single-threaded poll() reactor with
/// one-shot timers. Node logic written against NodeRuntime runs here unchanged
/// from the simulated network, including the send-before-open contract
/// (outbound bytes queue until the connect handshake completes).
///
/// Addresses are "host:port". All callbacks fire inside run()/run_until() on
/// the calling thread; connect() and listen() never invoke callbacks
/// synchronously.
class TcpRuntime final : public NodeRuntime {
 public:
  /// seed == 0 draws a random seed; fixed seeds make message ids reproducible.
  explicit TcpRuntime(std::string host_name, std::uint64_t seed = 0);
  ~TcpRuntime() override;
  TcpRuntime(const TcpRuntime&) = delete;
  TcpRuntime& operator=(const TcpRuntime&) = delete;

  void set_client(NetClient* client) override { client_ = client; }
  const std::string& host() const override { return host_; }
  std::int64_t now_ms() const override;
  std::uint64_t schedule(std::int64_t delay_ms, std::function<void()> fn) override;
  void cancel(std::uint64_t timer_id) override;
  ConnId connect(const std::string& address) override;
  void send(ConnId conn, std::string bytes) override;
  void close(ConnId conn) override;
  std::uint64_t rand64() override { return rng_.next(); }
  EventLog& log() override { return log_; }

  /// Accepts inbound connections on "host:port" (empty host binds all
  /// interfaces, port 0 picks a free port). Returns the bound port. Throws
  /// std::runtime_error if the socket cannot be bound.
  std::uint16_t listen(const std::string& address);

  /// Drives the reactor until stop() is called.
  void run();

  /// Drives the reactor until `done()` returns true; gives up after `cap_ms`
  /// real milliseconds when cap_ms >= 0. Returns whether done() turned true.
  bool run_until(const std::function<bool()>& done, std::int64_t cap_ms = -1);

  /// One reactor iteration: fire due timers, then block in poll() for at most
  /// `max_wait_ms`. Lets several runtimes share a thread (mainly in tests).
  void poll_once(std::int64_t max_wait_ms);

  /// Safe to call from another thread or a signal context.
  void stop() { stopped_.store(true, std::memory_order_relaxed); }

 private:
  struct Conn {
    int fd = -1;
    bool established = false;  // outbound handshake finished / inbound accepted
    bool closing = false;      // local close requested: flush, then tear down
    bool dead_on_open = false; // connect() failed before a socket existed
    std::string out;
  };
  struct Timer {
    std::int64_t deadline = 0;
    std::function<void()> fn;
  };

  void fire_due_timers();
  std::int64_t next_deadline() const;
  void handle_readable(ConnId id);
  void handle_writable(ConnId id);
  bool flush(ConnId id);  // returns false if the connection was destroyed
  void destroy(ConnId id, bool notify);
  void accept_pending(int listen_fd);

  std::string host_;
  NetClient* client_ = nullptr;
  std::int64_t t0_ns_ = 0;
  std::vector<int> listeners_;
  std::map<ConnId, Conn> conns_;
  ConnId next_conn_ = 1;
  std::map<std::uint64_t, Timer> timers_;
  std::uint64_t next_timer_ = 1;
  SimRng rng_;
  EventLog log_;
  std::atomic<bool> stopped_{false};
};

}  // namespace geofaas
