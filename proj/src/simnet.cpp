#include "geofaas/simnet.hpp"

#include <algorithm>
#include <stdexcept>

namespace geofaas {

/// Per-host facade over the shared SimNet.
class SimHostRuntime final : public NodeRuntime {
 public:
  SimHostRuntime(SimNet& net, std::string host) : net_(net), host_(std::move(host)) {}

  void set_client(NetClient* client) override { net_.hosts_.at(host_).client = client; }
  const std::string& host() const override { return host_; }

  std::int64_t now_ms() const override { return net_.now_ms_; }

  std::uint64_t schedule(std::int64_t delay_ms, std::function<void()> fn) override {
    return net_.schedule_timer(host_, delay_ms, std::move(fn));
  }
  void cancel(std::uint64_t timer_id) override { net_.cancel_timer(timer_id); }

  ConnId connect(const std::string& address) override { return net_.open_conn(host_, address); }
  void send(ConnId conn, std::string bytes) override {
    net_.send_bytes(host_, conn, std::move(bytes));
  }
  void close(ConnId conn) override { net_.close_conn(host_, conn); }

  std::uint64_t rand64() override { return net_.rng_.next(); }
  EventLog& log() override { return net_.log_; }

 private:
  SimNet& net_;
  std::string host_;
};

SimNet::SimNet(std::uint64_t seed) : rng_(seed) {}
SimNet::~SimNet() = default;

NodeRuntime& SimNet::add_host(const std::string& name) {
  if (name.empty() || hosts_.count(name)) {
    throw std::invalid_argument("simnet: bad or duplicate host '" + name + "'");
  }
  Host& h = hosts_[name];
  h.runtime = std::make_unique<SimHostRuntime>(*this, name);
  return *h.runtime;
}

void SimNet::kill_host(const std::string& name) {
  const auto it = hosts_.find(name);
  if (it == hosts_.end()) throw std::invalid_argument("simnet: unknown host '" + name + "'");
  it->second.alive = false;
}

bool SimNet::host_alive(const std::string& name) const {
  const auto it = hosts_.find(name);
  return it != hosts_.end() && it->second.alive;
}

void SimNet::set_latency(const std::string& a, const std::string& b, std::int64_t ms) {
  latency_[std::minmax(a, b)] = ms;
}

std::int64_t SimNet::latency_between(const std::string& a, const std::string& b) {
  if (a == b) return 0;
  const auto it = latency_.find(std::minmax(a, b));
  return it != latency_.end() ? it->second : default_latency_ms_;
}

std::int64_t SimNet::jitter() { return jitter_max_ms_ > 0 ? rng_.range(0, jitter_max_ms_) : 0; }

NetClient* SimNet::live_client(const std::string& host) {
  const auto it = hosts_.find(host);
  return it != hosts_.end() && it->second.alive ? it->second.client : nullptr;
}

void SimNet::push_event(std::int64_t at, const std::string& target, std::uint64_t timer_id,
                        std::function<void()> fn) {
  queue_.push(Event{std::max(at, now_ms_), next_seq_++, target, timer_id, std::move(fn)});
}

std::uint64_t SimNet::schedule_timer(const std::string& host, std::int64_t delay_ms,
                                     std::function<void()> fn) {
  const std::uint64_t id = next_timer_++;
  push_event(now_ms_ + std::max<std::int64_t>(delay_ms, 0), host, id, std::move(fn));
  return id;
}

void SimNet::cancel_timer(std::uint64_t timer_id) { cancelled_timers_.insert(timer_id); }

ConnId SimNet::open_conn(const std::string& from, const std::string& to) {
  const ConnId id = next_conn_++;
  Conn& c = conns_[id];
  c.from = from;
  c.to = to;

  const auto target = hosts_.find(to);
  const bool refused = target == hosts_.end();
  if (refused || !target->second.alive) {
    // Refused after one round trip; a crashed host blackholes packets until
    // the connect timeout instead.
    const std::int64_t wait = refused ? 2 * latency_between(from, to) : connect_timeout_ms_;
    c.closed_from = c.closed_to = true;
    push_event(now_ms_ + wait, from, 0, [this, id, from] {
      conns_.erase(id);
      if (NetClient* n = live_client(from)) n->on_close(id);
    });
    return id;
  }

  const std::int64_t lat = latency_between(from, to);
  c.established = false;
  c.watermark_fwd = now_ms_ + lat;      // data can't overtake the opening packet
  c.watermark_rev = now_ms_ + 2 * lat;  // nor the acceptance on the way back
  push_event(now_ms_ + lat, to, 0, [this, id, to] {
    if (NetClient* n = live_client(to)) n->on_accept(id);
  });
  push_event(now_ms_ + 2 * lat, from, 0, [this, id, from] {
    const auto it = conns_.find(id);
    if (it == conns_.end() || it->second.closed_from) return;
    it->second.established = true;
    if (NetClient* n = live_client(from)) n->on_open(id);
  });
  return id;
}

void SimNet::send_bytes(const std::string& from, ConnId conn, std::string bytes) {
  const auto it = conns_.find(conn);
  if (it == conns_.end()) return;
  Conn& c = it->second;
  const bool forward = from == c.from;
  if (!forward && from != c.to) return;      // not an endpoint
  if (forward ? c.closed_from : c.closed_to) return;

  const std::string& dst = forward ? c.to : c.from;
  std::int64_t& watermark = forward ? c.watermark_fwd : c.watermark_rev;
  const std::int64_t at = std::max(now_ms_ + latency_between(from, dst) + jitter(), watermark);
  watermark = at;
  push_event(at, dst, 0, [this, conn, dst, payload = std::move(bytes), forward] {
    const auto cit = conns_.find(conn);
    if (cit == conns_.end()) return;
    // Receiver must not have closed its side.
    if (forward ? cit->second.closed_to : cit->second.closed_from) return;
    if (NetClient* n = live_client(dst)) n->on_data(conn, payload);
  });
}

void SimNet::close_conn(const std::string& from, ConnId conn) {
  const auto it = conns_.find(conn);
  if (it == conns_.end()) return;
  Conn& c = it->second;
  const bool forward = from == c.from;
  if (!forward && from != c.to) return;
  bool& mine = forward ? c.closed_from : c.closed_to;
  if (mine) return;
  mine = true;

  const std::string dst = forward ? c.to : c.from;
  std::int64_t& watermark = forward ? c.watermark_fwd : c.watermark_rev;
  const std::int64_t at = std::max(now_ms_ + latency_between(from, dst), watermark);
  watermark = at;
  push_event(at, dst, 0, [this, conn, dst, forward] {
    const auto cit = conns_.find(conn);
    if (cit == conns_.end()) return;
    bool& theirs = forward ? cit->second.closed_to : cit->second.closed_from;
    if (theirs) return;  // they closed concurrently
    theirs = true;
    NetClient* n = live_client(dst);
    conns_.erase(cit);
    if (n) n->on_close(conn);
  });
}

bool SimNet::step() {
  if (queue_.empty()) return false;
  Event ev = queue_.top();
  queue_.pop();
  if (ev.timer_id != 0) {
    const auto it = cancelled_timers_.find(ev.timer_id);
    if (it != cancelled_timers_.end()) {
      cancelled_timers_.erase(it);
      return true;  // a cancelled timer is consumed without running or advancing time
    }
  }
  const auto host = hosts_.find(ev.target_host);
  if (host == hosts_.end() || !host->second.alive) return true;  // dropped with the host
  now_ms_ = std::max(now_ms_, ev.t);
  ev.fn();
  return true;
}

void SimNet::run_for(std::int64_t duration_ms) {
  const std::int64_t horizon = now_ms_ + duration_ms;
  while (!queue_.empty() && queue_.top().t <= horizon) {
    if (!step()) break;
  }
  now_ms_ = std::max(now_ms_, horizon);
}

bool SimNet::run_until_idle(std::int64_t cap_ms) {
  while (!queue_.empty()) {
    const Event& top = queue_.top();
    // Tombstones of cancelled timers never execute; drain them regardless of
    // how far out their deadline was.
    const bool tombstone =
        top.timer_id != 0 && cancelled_timers_.find(top.timer_id) != cancelled_timers_.end();
    if (!tombstone && top.t > cap_ms) break;
    if (!step()) break;
  }
  return queue_.empty();
}

}  // namespace geofaas
