#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "geofaas/executor.hpp"
#include "geofaas/registry.hpp"
#include "geofaas/runtime.hpp"
#include "geofaas/wire.hpp"

namespace geofaas {

struct BridgeConfig {
  std::string bridge_id;
  BrokerTier mode = BrokerTier::Edge;
  Geofence service_area = Geofence::world();  // edge: the local broker's area
  std::vector<std::string> functions{"sieve"};
  std::int64_t offload_deadline_ms = 10000;  // per-executor attempt deadline
  std::string broker_address;
  GeoPoint location{};  // stamped as sender_location on published messages
  std::int64_t heartbeat_interval_ms = 500;
  std::size_t worker_bound = 64;  // concurrent call handling limit
  std::int64_t answered_retention_ms = 600000;  // duplicate-suppression window
};

/// Function-call gateway between the pub/sub plane and FaaS executors.
/// Edge mode: subscribes /f/call geofenced to its service area, acks
/// immediately, runs executors in configured order, and offloads to the cloud
/// via /f/nack (carrying the full original call) when every executor fails.
/// Cloud mode: additionally subscribes /f/nack and /f/call/retry with World
/// scope and answers with an error Result instead of offloading further.
/// Result payloads are "ok:<bytes>" or "err:<detail>".
class BridgeNode final : public NetClient {
 public:
  BridgeNode(NodeRuntime& rt, ConnRouter& router, BridgeConfig cfg,
             std::vector<ExecutorHandle*> executors);
  ~BridgeNode() override;

  BridgeNode(const BridgeNode&) = delete;
  BridgeNode& operator=(const BridgeNode&) = delete;

  /// Planned shutdown: tells the broker (immediate Dead) and closes.
  void stop();

  /// Arms a scripted shutdown: once `results` results have been published the
  /// bridge stops serving (arriving calls are dropped) and disconnects after
  /// `teardown_ms`, like a process draining on its way down.
  void shutdown_after(std::size_t results, std::int64_t teardown_ms = 50);

  std::size_t results_published() const { return results_published_; }
  bool online() const { return broker_acked_; }

  // NetClient
  void on_open(ConnId conn) override;
  void on_data(ConnId conn, std::string_view bytes) override;
  void on_close(ConnId conn) override;

 private:
  struct PendingCall {
    Message call;
    std::string origin;  // direct | offload | retry
    std::size_t next_executor = 0;
    std::string last_error;
  };

  void handle_message(const Message& m);
  void handle_control(const ControlMessage& c);
  void handle_nack(const Message& nack);
  void admit(const Message& call, const std::string& origin);
  void attempt(const std::string& corr);
  void give_up(const Message& call, const std::string& origin, const std::string& reason);
  void publish_result(const Message& call, const std::string& origin, bool ok,
                      const std::string& body);
  Message make_reply(const Message& call, TopicKind kind);
  void publish(const Message& m);
  void heartbeat();
  void finish_shutdown();
  void sweep_answered();

  NodeRuntime& rt_;
  ConnRouter& router_;
  BridgeConfig cfg_;
  std::vector<ExecutorHandle*> executors_;
  MsgIdGen ids_;
  ConnId conn_ = kNoConn;
  FrameDecoder decoder_;
  bool broker_acked_ = false;
  bool shutting_down_ = false;
  bool stopped_ = false;
  std::size_t shutdown_after_results_ = 0;  // 0 = never
  std::int64_t teardown_ms_ = 50;
  std::size_t results_published_ = 0;
  std::map<std::string, PendingCall> active_;
  std::map<std::string, std::int64_t> answered_;  // corr -> when it was settled
  std::uint64_t heartbeat_timer_ = 0;
  std::uint64_t shutdown_timer_ = 0;
  std::uint64_t sweep_timer_ = 0;
};

}  // namespace geofaas
