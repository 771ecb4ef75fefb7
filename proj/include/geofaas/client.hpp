#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "geofaas/registry.hpp"
#include "geofaas/runtime.hpp"
#include "geofaas/wire.hpp"

namespace geofaas {

struct ClientConfig {
  std::string client_id;
  std::string bootstrap_address;
  GeoPoint location{};
  std::vector<std::string> functions{"sieve"};
  std::int64_t ack_timeout_ms = 2000;
  std::int64_t result_timeout_ms = 10000;
  int max_retries = 1;  // extra publishes after the first, on the retry topic
};

/// Call lifecycle phases; they only ever advance.
enum class CallPhase { Sent, Acked, Resolved, Failed };
std::string to_string(CallPhase p);

struct CallState {
  std::string call_id;         // first correlation id; stable across retries
  std::string correlation_id;  // latest attempt's correlation id
  CallPhase phase = CallPhase::Sent;
  int attempts = 1;
  std::string serving_node_hint;  // responder node id, from Ack/Result sender
  std::string reply_broker_hint;  // broker named by a handoff-annotated reply
  bool ok = false;                // valid once Resolved
  std::string result;             // result body (ok) or error detail
  std::string failure;            // no_ack | no_result | cloud_retry_failed
  std::int64_t sent_ms = 0;
  std::int64_t resolved_ms = 0;

  // Book-keeping for the retry machinery.
  std::string function;
  std::string payload;
  bool ever_acked = false;
  std::uint64_t ack_timer = 0;
  std::uint64_t result_timer = 0;
};

/// Function-calling client: connects to the responsible broker (following
/// handoff redirects), subscribes to its reply topics, and runs each call's
/// send -> ack -> result lifecycle with bounded retries through the cloud's
/// direct-invocation topic. Fully callback-driven; callers pump the runtime
/// and poll. A handoff after a location update keeps the old session open so
/// in-flight replies drain while the new session comes up.
class ClientCore final : public NetClient {
 public:
  using Done = std::function<void(bool ok)>;

  ClientCore(NodeRuntime& rt, ConnRouter& router, Registry registry, ClientConfig cfg);
  ~ClientCore() override;

  ClientCore(const ClientCore&) = delete;
  ClientCore& operator=(const ClientCore&) = delete;

  /// Dials the bootstrap broker and follows redirects until accepted.
  void connect(Done done);

  /// Sends the new location; on handoff, reconnects and re-subscribes before
  /// reporting completion. Calls may be started again once `done` fires.
  void update_location(GeoPoint p, Done done);

  /// Publishes a call and returns its stable id. Requires a ready session.
  std::string start_call(const std::string& function, std::string payload);

  const CallState* poll(const std::string& call_id) const;
  const std::map<std::string, CallState>& calls() const { return calls_; }

  /// Invoked whenever a call reaches a terminal phase (Resolved or Failed).
  void set_call_observer(std::function<void(const CallState&)> fn) {
    observer_ = std::move(fn);
  }
  bool idle() const;  // every started call reached a terminal phase
  bool ready() const { return session_ == Session::Ready; }
  const std::string& connected_broker() const { return connected_broker_; }

  /// Polite shutdown: Disconnect + close on every open session.
  void stop();

  // NetClient
  void on_open(ConnId conn) override;
  void on_data(ConnId conn, std::string_view bytes) override;
  void on_close(ConnId conn) override;

 private:
  enum class Session { Idle, Connecting, Ready, Relocating };

  void dial(const std::string& address);
  void handle_control(ConnId conn, const ControlMessage& c);
  void handle_reply(const Message& m);
  void handle_no_subscriber(const std::string& corr);
  void follow_handoff(const std::string& target_broker);
  void subscribe_all();
  void finish_pending(bool ok);
  CallState* by_corr(const std::string& corr);
  void arm_timers(CallState& c);
  void cancel_timers(CallState& c);
  void retry_or_fail(CallState& c);
  void publish(const Message& m);

  NodeRuntime& rt_;
  ConnRouter& router_;
  Registry registry_;
  ClientConfig cfg_;
  MsgIdGen ids_;
  GeoPoint location_;
  Session session_ = Session::Idle;
  ConnId conn_ = kNoConn;
  std::map<ConnId, FrameDecoder> open_;  // every live session incl. draining
  std::string connected_broker_;
  std::size_t redirect_hops_ = 0;
  Done pending_done_;
  std::map<std::string, CallState> calls_;        // call_id -> state
  std::map<std::string, std::string> corr_alias_;  // any attempt corr -> call_id
  std::function<void(const CallState&)> observer_;
  bool stopped_ = false;
};

}  // namespace geofaas
