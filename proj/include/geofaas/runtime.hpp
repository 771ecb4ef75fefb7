#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace geofaas {

/// Append-only structured log; the single source every metric is derived from.
/// Line format: "<ts_ms> <node> <kind>[ key=value]...". Keys and values must be
/// free of whitespace so lines stay machine-parseable.
class EventLog {
 public:
  using Fields = std::vector<std::pair<std::string, std::string>>;

  void record(std::int64_t ts_ms, std::string_view node, std::string_view kind,
              const Fields& fields = {});

  const std::vector<std::string>& lines() const { return lines_; }
  std::string to_text() const;
  void save(const std::string& path) const;

  struct Parsed {
    std::int64_t ts_ms = 0;
    std::string node;
    std::string kind;
    std::map<std::string, std::string> fields;
  };
  static std::vector<Parsed> parse(std::string_view text);

 private:
  std::vector<std::string> lines_;
};

/// splitmix64: tiny, portable, identical sequences on every platform for a
/// given seed (std::* distributions are not portable across standard libraries).
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, n); modulo bias is irrelevant at simulation scales.
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  /// Uniform double in [0, 1).
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Transport connection handle. 0 is never a valid id.
using ConnId = std::uint64_t;
inline constexpr ConnId kNoConn = 0;

/// Callbacks a node receives from its runtime. Data arrives as raw bytes;
/// nodes run a FrameDecoder per connection on top.
class NetClient {
 public:
  virtual ~NetClient() = default;
  virtual void on_open(ConnId conn) { (void)conn; }    // outbound connect completed
  virtual void on_accept(ConnId conn) { (void)conn; }  // inbound connection established
  virtual void on_data(ConnId conn, std::string_view bytes) = 0;
  virtual void on_close(ConnId conn) = 0;  // peer closed or connect failed
};

/// Everything a node may touch in its environment: virtual (or real) time,
/// one-shot timers, connections, randomness, and the event log. Node logic is
/// identical under the simulated network and real sockets.
class NodeRuntime {
 public:
  virtual ~NodeRuntime() = default;

  virtual void set_client(NetClient* client) = 0;
  virtual const std::string& host() const = 0;

  virtual std::int64_t now_ms() const = 0;
  /// One-shot timer; returns an id usable with cancel(). Delay is clamped to >= 0.
  virtual std::uint64_t schedule(std::int64_t delay_ms, std::function<void()> fn) = 0;
  virtual void cancel(std::uint64_t timer_id) = 0;

  /// Opens a connection to `address`; on_open (or on_close on failure) follows.
  /// Sending before on_open is allowed; bytes are delivered after establishment.
  virtual ConnId connect(const std::string& address) = 0;
  virtual void send(ConnId conn, std::string bytes) = 0;
  /// Graceful close: bytes already sent are still delivered, then the peer
  /// sees on_close. Closing an unknown or closed connection is a no-op.
  virtual void close(ConnId conn) = 0;

  virtual std::uint64_t rand64() = 0;

  virtual EventLog& log() = 0;
  /// Convenience: log a line stamped with now_ms() and this host's name.
  void record(std::string_view kind, const EventLog::Fields& fields = {}) {
    log().record(now_ms(), host(), kind, fields);
  }
};

/// Fans transport callbacks out to per-connection handlers. A host has exactly
/// one NetClient at the transport layer; components sharing the host (say a
/// bridge core plus its remote-executor stubs) each own their connections here.
class ConnRouter final : public NetClient {
 public:
  explicit ConnRouter(NodeRuntime& rt) : rt_(rt) { rt_.set_client(this); }
  ConnRouter(const ConnRouter&) = delete;
  ConnRouter& operator=(const ConnRouter&) = delete;

  /// Inbound connections are handed to the acceptor; without one they are refused.
  void set_acceptor(NetClient* acceptor) { acceptor_ = acceptor; }

  ConnId connect(const std::string& address, NetClient* owner) {
    const ConnId conn = rt_.connect(address);
    owners_[conn] = owner;
    return conn;
  }

  /// Stop routing for a connection this side has closed.
  void forget(ConnId conn) { owners_.erase(conn); }

  void on_open(ConnId conn) override {
    if (NetClient* o = owner(conn)) o->on_open(conn);
  }
  void on_accept(ConnId conn) override {
    if (acceptor_ == nullptr) {
      rt_.close(conn);
      return;
    }
    owners_[conn] = acceptor_;
    acceptor_->on_accept(conn);
  }
  void on_data(ConnId conn, std::string_view bytes) override {
    if (NetClient* o = owner(conn)) o->on_data(conn, bytes);
  }
  void on_close(ConnId conn) override {
    const auto it = owners_.find(conn);
    if (it == owners_.end()) return;
    NetClient* o = it->second;
    owners_.erase(it);
    o->on_close(conn);
  }

 private:
  NetClient* owner(ConnId conn) {
    const auto it = owners_.find(conn);
    return it == owners_.end() ? nullptr : it->second;
  }

  NodeRuntime& rt_;
  NetClient* acceptor_ = nullptr;
  std::map<ConnId, NetClient*> owners_;
};

}  // namespace geofaas
