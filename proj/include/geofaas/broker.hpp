#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "geofaas/registry.hpp"
#include "geofaas/runtime.hpp"
#include "geofaas/wire.hpp"

namespace geofaas {

struct BrokerConfig {
  std::string broker_id;
  // A bridge missing pings for one timeout is Suspected, for two it is Dead.
  std::int64_t heartbeat_timeout_ms = 2000;
  std::int64_t liveness_sweep_ms = 500;
  // Handed-off sessions stay open this long so in-flight replies still drain.
  std::int64_t handoff_drain_ms = 3000;
  // Reply routes (correlation id -> origin connection) are kept this long.
  std::int64_t reply_route_retention_ms = 600000;
};

enum class Liveness { Alive, Suspected, Dead };
std::string to_string(Liveness v);

/// One row of the subscription table, exposed for introspection and tests.
struct SubscriptionInfo {
  std::string subscriber_id;
  PeerRole role = PeerRole::Client;
  std::string topic;
  std::string geofence;  // rendered fence text

  bool operator==(const SubscriptionInfo&) const = default;
  auto operator<=>(const SubscriptionInfo&) const = default;
};

/// Geo-aware pub/sub broker. Routes Calls to the bridge whose subscription
/// geofence contains the publisher's location, forwards at most one hop to the
/// responsible peer broker otherwise, and routes replies (Ack/Result and
/// NoSubscriber notices) back along the recorded per-correlation path.
/// Registers itself as the runtime's network client.
class BrokerNode final : public NetClient {
 public:
  BrokerNode(NodeRuntime& rt, Registry registry, BrokerConfig cfg);
  ~BrokerNode() override;

  BrokerNode(const BrokerNode&) = delete;
  BrokerNode& operator=(const BrokerNode&) = delete;

  /// Cancels timers and closes every session; the node is inert afterwards.
  void stop();

  const std::string& broker_id() const { return cfg_.broker_id; }

  /// Current subscription table, sorted by (subscriber, topic).
  std::vector<SubscriptionInfo> subscriptions() const;

  /// Liveness of a bridge peer; a bridge with no session is Dead.
  Liveness bridge_liveness(const std::string& bridge_id) const;

  // NetClient
  void on_accept(ConnId conn) override;
  void on_open(ConnId conn) override;
  void on_data(ConnId conn, std::string_view bytes) override;
  void on_close(ConnId conn) override;

 private:
  struct Session {
    std::string peer_id;
    PeerRole role = PeerRole::Client;
    GeoPoint location{};
    bool connected = false;  // Connect handshake completed
    bool draining = false;   // handed off; closes once the drain window ends
    bool outbound = false;   // a link this broker dialed to a peer broker
    std::string handoff_target;
    Liveness liveness = Liveness::Alive;  // meaningful for bridges only
    std::int64_t last_ping_ms = 0;
    std::map<std::string, Geofence> subs;  // rendered topic -> geofence
    FrameDecoder decoder;
    std::uint64_t drain_timer = 0;
  };
  struct ReplyRoute {
    ConnId origin = kNoConn;
    std::int64_t created_ms = 0;
  };

  void handle_control(ConnId conn, Session& s, const ControlMessage& c);
  void handle_message(ConnId conn, Session& s, const Message& m);
  void route_request(ConnId conn, Session& s, const Message& m);
  void route_reply(const Message& m);
  void route_no_subscriber(const ControlMessage& c);
  void send_no_subscriber(ConnId conn, const Message& m);
  void begin_drain(ConnId conn, Session& s, const std::string& target_broker);
  void drop_session(ConnId conn, bool close_conn);
  ConnId link_to(const BrokerRecord& target);
  void protocol_error(ConnId conn, const std::string& reason);
  void send_control(ConnId conn, ControlMessage c);
  void sweep_liveness();
  void sweep_reply_routes();

  NodeRuntime& rt_;
  Registry registry_;
  BrokerConfig cfg_;
  std::map<ConnId, Session> sessions_;
  std::map<std::string, ConnId> links_;  // peer broker id -> outbound conn
  std::map<std::string, ReplyRoute> reply_routes_;
  std::uint64_t sweep_timer_ = 0;
  std::uint64_t gc_timer_ = 0;
  bool stopped_ = false;
};

}  // namespace geofaas
