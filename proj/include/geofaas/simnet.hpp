#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <string>

#include "geofaas/runtime.hpp"

namespace geofaas {

class SimHostRuntime;

/// Discrete-event simulated network. All hosts share one virtual clock, one
/// event log, and one random stream; runs with equal seeds and equal inputs
/// produce byte-identical logs.
///
/// Model: configurable symmetric one-way latency per host pair (plus optional
/// uniform jitter), FIFO delivery per connection direction, connection
/// establishment costing one round trip (accept after 1x latency, open after
/// 2x), and two failure modes -- graceful close (flushes in-flight data, peer
/// sees on_close) and kill_host (silent crash: no notifications, pending
/// deliveries to the host are dropped, its timers never fire).
class SimNet {
 public:
  explicit SimNet(std::uint64_t seed);
  ~SimNet();

  SimNet(const SimNet&) = delete;
  SimNet& operator=(const SimNet&) = delete;

  /// Registers a host addressable by `name`. The returned runtime stays valid
  /// for the SimNet's lifetime.
  NodeRuntime& add_host(const std::string& name);

  /// Silent crash. Idempotent.
  void kill_host(const std::string& name);
  bool host_alive(const std::string& name) const;

  /// One-way latency between two hosts, in ms. Symmetric; latest setting wins.
  void set_latency(const std::string& a, const std::string& b, std::int64_t ms);
  void set_default_latency(std::int64_t ms) { default_latency_ms_ = ms; }
  /// Adds uniform [0, max_ms] per-message jitter (FIFO order is still kept).
  void set_jitter(std::int64_t max_ms) { jitter_max_ms_ = max_ms; }

  std::int64_t now_ms() const { return now_ms_; }
  EventLog& log() { return log_; }
  SimRng& rng() { return rng_; }

  /// Processes the next pending event. Returns false when none remain.
  bool step();
  /// Runs events with timestamp <= now + duration; advances the clock to that
  /// horizon even if the queue drains early.
  void run_for(std::int64_t duration_ms);
  /// Runs until the queue drains or the clock passes `cap_ms`; true if drained.
  bool run_until_idle(std::int64_t cap_ms);

 private:
  friend class SimHostRuntime;

  struct Event {
    std::int64_t t = 0;
    std::uint64_t seq = 0;
    std::string target_host;     // skipped if the host is dead when it fires
    std::uint64_t timer_id = 0;  // nonzero for cancellable timers
    std::function<void()> fn;
  };
  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
      return a.t != b.t ? a.t > b.t : a.seq > b.seq;
    }
  };

  struct Host {
    NetClient* client = nullptr;
    bool alive = true;
    std::unique_ptr<SimHostRuntime> runtime;
  };

  /// One simulated connection; both endpoints share the ConnId.
  struct Conn {
    std::string from, to;
    bool established = false;
    bool closed_from = false;  // that side will not send or receive further
    bool closed_to = false;
    std::int64_t watermark_fwd = 0;  // earliest next delivery time, from -> to
    std::int64_t watermark_rev = 0;
  };

  void push_event(std::int64_t at, const std::string& target, std::uint64_t timer_id,
                  std::function<void()> fn);
  std::int64_t latency_between(const std::string& a, const std::string& b);
  std::int64_t jitter();
  NetClient* live_client(const std::string& host);

  // NodeRuntime backends, keyed by host.
  std::uint64_t schedule_timer(const std::string& host, std::int64_t delay_ms,
                               std::function<void()> fn);
  void cancel_timer(std::uint64_t timer_id);
  ConnId open_conn(const std::string& from, const std::string& to);
  void send_bytes(const std::string& from, ConnId conn, std::string bytes);
  void close_conn(const std::string& from, ConnId conn);

  std::int64_t now_ms_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_conn_ = 1;
  std::uint64_t next_timer_ = 1;
  std::int64_t default_latency_ms_ = 1;
  std::int64_t jitter_max_ms_ = 0;
  std::int64_t connect_timeout_ms_ = 3000;

  std::map<std::string, Host> hosts_;
  std::map<std::pair<std::string, std::string>, std::int64_t> latency_;  // key ordered pair
  std::map<ConnId, Conn> conns_;
  std::set<std::uint64_t> cancelled_timers_;
  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  EventLog log_;
  SimRng rng_;
};

}  // namespace geofaas
