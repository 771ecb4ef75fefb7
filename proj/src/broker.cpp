#include "geofaas/broker.hpp"

#include <algorithm>
#include <variant>

namespace geofaas {

namespace {

/// Event-log values must be whitespace-free tokens.
std::string token(std::string s) {
  for (char& ch : s) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') ch = '_';
  }
  return s.empty() ? std::string("-") : s;
}

}  // namespace

std::string to_string(Liveness v) {
  switch (v) {
    case Liveness::Alive: return "alive";
    case Liveness::Suspected: return "suspected";
    case Liveness::Dead: return "dead";
  }
  return "dead";
}

BrokerNode::BrokerNode(NodeRuntime& rt, Registry registry, BrokerConfig cfg)
    : rt_(rt), registry_(std::move(registry)), cfg_(std::move(cfg)) {
  if (!registry_.find(cfg_.broker_id)) {
    throw std::invalid_argument("broker '" + cfg_.broker_id + "' is not in the registry");
  }
  rt_.set_client(this);
  sweep_timer_ = rt_.schedule(cfg_.liveness_sweep_ms, [this] { sweep_liveness(); });
  const std::int64_t gc_every = std::max<std::int64_t>(1000, cfg_.reply_route_retention_ms / 4);
  gc_timer_ = rt_.schedule(gc_every, [this] { sweep_reply_routes(); });
}

BrokerNode::~BrokerNode() {
  stop();
  rt_.set_client(nullptr);
}

void BrokerNode::stop() {
  if (stopped_) return;
  stopped_ = true;
  rt_.cancel(sweep_timer_);
  rt_.cancel(gc_timer_);
  for (auto& [conn, s] : sessions_) {
    if (s.drain_timer != 0) rt_.cancel(s.drain_timer);
    rt_.close(conn);
  }
  sessions_.clear();
  links_.clear();
  reply_routes_.clear();
}

std::vector<SubscriptionInfo> BrokerNode::subscriptions() const {
  std::vector<SubscriptionInfo> out;
  for (const auto& [conn, s] : sessions_) {
    if (!s.connected || s.outbound) continue;
    for (const auto& [topic, fence] : s.subs) {
      out.push_back({s.peer_id, s.role, topic, fence.to_text()});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Liveness BrokerNode::bridge_liveness(const std::string& bridge_id) const {
  for (const auto& [conn, s] : sessions_) {
    if (s.connected && s.role == PeerRole::Bridge && s.peer_id == bridge_id) return s.liveness;
  }
  return Liveness::Dead;
}

void BrokerNode::on_accept(ConnId conn) {
  if (stopped_) {
    rt_.close(conn);
    return;
  }
  sessions_[conn];  // awaits Connect
}

void BrokerNode::on_open(ConnId conn) {
  // Outbound peer link established; queued frames are already on their way.
  (void)conn;
}

void BrokerNode::on_close(ConnId conn) {
  const auto it = sessions_.find(conn);
  if (it == sessions_.end()) return;
  Session& s = it->second;
  if (s.connected && s.role == PeerRole::Bridge) {
    rt_.record("bridge_dead", {{"peer", token(s.peer_id)}, {"reason", "connection_lost"}});
  }
  rt_.record("session_closed", {{"peer", token(s.peer_id)}, {"reason", "remote"}});
  drop_session(conn, false);
}

void BrokerNode::on_data(ConnId conn, std::string_view bytes) {
  {
    const auto it = sessions_.find(conn);
    if (it == sessions_.end()) return;
    it->second.decoder.feed(bytes);
  }
  while (true) {
    const auto it = sessions_.find(conn);
    if (it == sessions_.end()) return;  // dropped while handling an earlier frame
    std::optional<Envelope> env;
    try {
      env = it->second.decoder.next();
    } catch (const WireError& e) {
      protocol_error(conn, token("bad_frame:" + e.rule));
      return;
    }
    if (!env) return;
    if (const auto* c = std::get_if<ControlMessage>(&*env)) {
      handle_control(conn, it->second, *c);
    } else if (const auto* m = std::get_if<Message>(&*env)) {
      handle_message(conn, it->second, *m);
    } else {
      protocol_error(conn, "unexpected_exec_frame");
      return;
    }
  }
}

void BrokerNode::send_control(ConnId conn, ControlMessage c) {
  c.sender_id = cfg_.broker_id;
  rt_.send(conn, encode(Envelope{std::move(c)}));
}

void BrokerNode::protocol_error(ConnId conn, const std::string& reason) {
  const auto it = sessions_.find(conn);
  const std::string peer = it != sessions_.end() ? it->second.peer_id : std::string();
  rt_.record("protocol_error", {{"peer", token(peer)}, {"reason", token(reason)}});
  ControlMessage err;
  err.kind = ControlKind::Error;
  err.text = reason;
  send_control(conn, std::move(err));
  drop_session(conn, true);
}

void BrokerNode::drop_session(ConnId conn, bool close_conn) {
  const auto it = sessions_.find(conn);
  if (it == sessions_.end()) return;
  Session& s = it->second;
  if (s.drain_timer != 0) rt_.cancel(s.drain_timer);
  if (s.outbound) links_.erase(s.peer_id);
  if (close_conn) rt_.close(conn);
  sessions_.erase(it);
}

void BrokerNode::begin_drain(ConnId conn, Session& s, const std::string& target_broker) {
  ControlMessage handoff;
  handoff.kind = ControlKind::Handoff;
  handoff.broker_id = target_broker;
  send_control(conn, std::move(handoff));
  s.draining = true;
  s.handoff_target = target_broker;
  if (s.drain_timer != 0) rt_.cancel(s.drain_timer);
  s.drain_timer = rt_.schedule(cfg_.handoff_drain_ms, [this, conn] {
    const auto it = sessions_.find(conn);
    if (it == sessions_.end()) return;
    rt_.record("session_closed", {{"peer", token(it->second.peer_id)}, {"reason", "drained"}});
    it->second.drain_timer = 0;
    drop_session(conn, true);
  });
}

ConnId BrokerNode::link_to(const BrokerRecord& target) {
  const auto it = links_.find(target.broker_id);
  if (it != links_.end()) return it->second;
  const ConnId conn = rt_.connect(target.address);
  Session& s = sessions_[conn];
  s.peer_id = target.broker_id;
  s.role = PeerRole::Broker;
  s.connected = true;
  s.outbound = true;
  links_[target.broker_id] = conn;
  ControlMessage hello;
  hello.kind = ControlKind::Connect;
  hello.role = PeerRole::Broker;
  send_control(conn, std::move(hello));
  rt_.record("peer_link", {{"to", token(target.broker_id)}});
  return conn;
}

void BrokerNode::handle_control(ConnId conn, Session& s, const ControlMessage& c) {
  switch (c.kind) {
    case ControlKind::Connect: {
      if (s.connected) {
        protocol_error(conn, "duplicate_connect");
        return;
      }
      s.connected = true;
      s.peer_id = c.sender_id;
      s.role = c.role;
      s.location = c.location;
      if (c.role == PeerRole::Broker) {
        rt_.record("peer_connected", {{"peer", token(s.peer_id)}});
        ControlMessage ack;
        ack.kind = ControlKind::ConnectAck;
        ack.broker_id = cfg_.broker_id;
        send_control(conn, std::move(ack));
        return;
      }
      if (c.role == PeerRole::Bridge) {
        s.liveness = Liveness::Alive;
        s.last_ping_ms = rt_.now_ms();
        rt_.record("bridge_connected", {{"peer", token(s.peer_id)}});
        ControlMessage ack;
        ack.kind = ControlKind::ConnectAck;
        ack.broker_id = cfg_.broker_id;
        send_control(conn, std::move(ack));
        return;
      }
      const BrokerRecord& resp = registry_.responsible_broker(c.location);
      if (resp.broker_id == cfg_.broker_id) {
        rt_.record("client_connected", {{"peer", token(s.peer_id)}});
        ControlMessage ack;
        ack.kind = ControlKind::ConnectAck;
        ack.broker_id = cfg_.broker_id;
        send_control(conn, std::move(ack));
      } else {
        // Not responsible: name the right broker, then keep the session open
        // for the drain window so anything published meanwhile still routes.
        rt_.record("handoff",
                   {{"peer", token(s.peer_id)}, {"to", token(resp.broker_id)}, {"via", "connect"}});
        begin_drain(conn, s, resp.broker_id);
      }
      return;
    }
    case ControlKind::ConnectAck: {
      if (!s.outbound) protocol_error(conn, "unexpected_connect_ack");
      return;  // our own peer link came up; nothing to do
    }
    case ControlKind::LocationUpdate: {
      if (!s.connected || s.role != PeerRole::Client) {
        protocol_error(conn, "location_update_without_session");
        return;
      }
      if (s.draining) {
        rt_.record("location_ignored", {{"peer", token(s.peer_id)}, {"reason", "draining"}});
        return;
      }
      s.location = c.location;
      const BrokerRecord& resp = registry_.responsible_broker(c.location);
      if (resp.broker_id == cfg_.broker_id) {
        rt_.record("location_ok", {{"peer", token(s.peer_id)}});
        ControlMessage ack;
        ack.kind = ControlKind::ConnectAck;
        ack.broker_id = cfg_.broker_id;
        send_control(conn, std::move(ack));
      } else {
        rt_.record("handoff",
                   {{"peer", token(s.peer_id)}, {"to", token(resp.broker_id)}, {"via", "update"}});
        begin_drain(conn, s, resp.broker_id);
      }
      return;
    }
    case ControlKind::Subscribe: {
      if (!s.connected) {
        protocol_error(conn, "subscribe_before_connect");
        return;
      }
      const Geofence fence = c.geofence ? *c.geofence : Geofence::world();
      s.subs.insert_or_assign(c.topic, fence);
      rt_.record("subscribe", {{"peer", token(s.peer_id)},
                               {"topic", token(c.topic)},
                               {"fence", token(fence.to_text())}});
      return;
    }
    case ControlKind::Unsubscribe: {
      if (!s.connected) {
        protocol_error(conn, "unsubscribe_before_connect");
        return;
      }
      s.subs.erase(c.topic);
      rt_.record("unsubscribe", {{"peer", token(s.peer_id)}, {"topic", token(c.topic)}});
      return;
    }
    case ControlKind::Ping: {
      if (!s.connected) {
        protocol_error(conn, "ping_before_connect");
        return;
      }
      s.last_ping_ms = rt_.now_ms();
      if (s.role == PeerRole::Bridge && s.liveness == Liveness::Suspected) {
        s.liveness = Liveness::Alive;
        rt_.record("bridge_alive", {{"peer", token(s.peer_id)}});
      }
      ControlMessage pong;
      pong.kind = ControlKind::Pong;
      send_control(conn, std::move(pong));
      return;
    }
    case ControlKind::Pong:
      return;  // brokers do not ping anyone
    case ControlKind::Disconnect: {
      if (s.connected && s.role == PeerRole::Bridge) {
        rt_.record("bridge_dead", {{"peer", token(s.peer_id)}, {"reason", "disconnect"}});
      }
      rt_.record("session_closed", {{"peer", token(s.peer_id)}, {"reason", "disconnect"}});
      drop_session(conn, true);
      return;
    }
    case ControlKind::NoSubscriber: {
      route_no_subscriber(c);
      return;
    }
    case ControlKind::Handoff:
      return;  // brokers emit these; receiving one is peer noise
    case ControlKind::Error: {
      rt_.record("peer_error", {{"peer", token(s.peer_id)}, {"detail", token(c.text)}});
      return;
    }
  }
}

void BrokerNode::handle_message(ConnId conn, Session& s, const Message& m) {
  if (!s.connected) {
    protocol_error(conn, "publish_before_connect");
    return;
  }
  switch (m.topic.kind) {
    case TopicKind::Call:
    case TopicKind::CallRetry:
    case TopicKind::Nack:
      route_request(conn, s, m);
      return;
    case TopicKind::Ack:
    case TopicKind::Result:
      route_reply(m);
      return;
  }
}

void BrokerNode::route_request(ConnId conn, Session& s, const Message& m) {
  const std::string topic = m.topic.render();
  // First writer wins: duplicates of a correlation id retrace the original
  // path, so replies can never fork to two different origins.
  reply_routes_.emplace(m.correlation_id, ReplyRoute{conn, rt_.now_ms()});

  // Matching rule for request topics: the subscription geofence must contain
  // the publisher's location (world fences match trivially). Among several
  // live matches the lowest subscriber id wins, which keeps runs reproducible.
  const Session* best = nullptr;
  ConnId best_conn = kNoConn;
  for (const auto& [cid, cand] : sessions_) {
    if (cand.role != PeerRole::Bridge || !cand.connected || cand.draining) continue;
    const auto sub = cand.subs.find(topic);
    if (sub == cand.subs.end() || !sub->second.contains(m.sender_location)) continue;
    if (best == nullptr || cand.peer_id < best->peer_id) {
      best = &cand;
      best_conn = cid;
    }
  }
  if (best != nullptr) {
    rt_.record("deliver_local", {{"topic", token(topic)},
                                 {"corr", token(m.correlation_id)},
                                 {"from", token(m.sender_id)},
                                 {"to", token(best->peer_id)}});
    rt_.send(best_conn, encode(Envelope{m}));
    return;
  }

  if (s.role == PeerRole::Broker) {
    // Already forwarded once (one hop max): report back instead of bouncing.
    rt_.record("no_subscriber", {{"topic", token(topic)},
                                 {"corr", token(m.correlation_id)},
                                 {"to", token(s.peer_id)}});
    send_no_subscriber(conn, m);
    return;
  }

  // No local subscriber for a locally published request: hand it to the peer
  // broker nearest the matching subscriber. Calls go to the broker responsible
  // for the publisher's location; Nack and CallRetry always go to the cloud.
  const BrokerRecord* target = &registry_.cloud();
  if (m.topic.kind == TopicKind::Call) {
    const BrokerRecord& resp = registry_.responsible_broker(m.sender_location);
    if (resp.broker_id != cfg_.broker_id) target = &resp;
  }
  if (target->broker_id == cfg_.broker_id) {
    // This is the end of the line (e.g. the cloud broker with no live bridge).
    rt_.record("no_subscriber", {{"topic", token(topic)},
                                 {"corr", token(m.correlation_id)},
                                 {"to", token(s.peer_id)}});
    send_no_subscriber(conn, m);
    return;
  }
  const ConnId link = link_to(*target);
  rt_.record("forward", {{"topic", token(topic)},
                         {"corr", token(m.correlation_id)},
                         {"to", token(target->broker_id)}});
  rt_.send(link, encode(Envelope{m}));
}

void BrokerNode::route_reply(const Message& m) {
  const std::string topic = m.topic.render();
  const auto route = reply_routes_.find(m.correlation_id);
  if (route == reply_routes_.end()) {
    rt_.record("reply_dropped", {{"topic", token(topic)},
                                 {"corr", token(m.correlation_id)},
                                 {"reason", "unknown_correlation"}});
    return;
  }
  const auto sit = sessions_.find(route->second.origin);
  if (sit == sessions_.end()) {
    rt_.record("reply_dropped", {{"topic", token(topic)},
                                 {"corr", token(m.correlation_id)},
                                 {"reason", "origin_gone"}});
    return;
  }
  const Session& origin = sit->second;
  if (origin.role == PeerRole::Broker) {
    rt_.record("reply_forward", {{"topic", token(topic)},
                                 {"corr", token(m.correlation_id)},
                                 {"to", token(origin.peer_id)}});
    rt_.send(sit->first, encode(Envelope{m}));
    return;
  }
  // Final hop: the subscriber is identified by the correlation route; the
  // geofence is ignored for replies, but the session must hold the topic.
  if (origin.subs.find(topic) == origin.subs.end()) {
    rt_.record("reply_dropped", {{"topic", token(topic)},
                                 {"corr", token(m.correlation_id)},
                                 {"reason", "not_subscribed"}});
    return;
  }
  Message out = m;
  if (origin.draining && !origin.handoff_target.empty()) {
    out.reply_broker = origin.handoff_target;  // handoff notification
  }
  rt_.record("reply_deliver", {{"topic", token(topic)},
                               {"corr", token(m.correlation_id)},
                               {"to", token(origin.peer_id)}});
  rt_.send(sit->first, encode(Envelope{std::move(out)}));
}

void BrokerNode::route_no_subscriber(const ControlMessage& c) {
  const auto route = reply_routes_.find(c.correlation_id);
  if (route == reply_routes_.end()) {
    rt_.record("notice_dropped",
               {{"corr", token(c.correlation_id)}, {"reason", "unknown_correlation"}});
    return;
  }
  const auto sit = sessions_.find(route->second.origin);
  if (sit == sessions_.end()) {
    rt_.record("notice_dropped", {{"corr", token(c.correlation_id)}, {"reason", "origin_gone"}});
    return;
  }
  rt_.record("notice_routed",
             {{"corr", token(c.correlation_id)}, {"to", token(sit->second.peer_id)}});
  ControlMessage notice;
  notice.kind = ControlKind::NoSubscriber;
  notice.correlation_id = c.correlation_id;
  send_control(sit->first, std::move(notice));
}

void BrokerNode::send_no_subscriber(ConnId conn, const Message& m) {
  ControlMessage notice;
  notice.kind = ControlKind::NoSubscriber;
  notice.correlation_id = m.correlation_id;
  send_control(conn, std::move(notice));
}

void BrokerNode::sweep_liveness() {
  std::vector<ConnId> dead;
  for (auto& [conn, s] : sessions_) {
    if (!s.connected || s.role != PeerRole::Bridge) continue;
    const std::int64_t silent_for = rt_.now_ms() - s.last_ping_ms;
    if (silent_for >= 2 * cfg_.heartbeat_timeout_ms) {
      rt_.record("bridge_dead", {{"peer", token(s.peer_id)}, {"reason", "silent"}});
      dead.push_back(conn);
    } else if (silent_for >= cfg_.heartbeat_timeout_ms && s.liveness == Liveness::Alive) {
      s.liveness = Liveness::Suspected;
      rt_.record("bridge_suspected", {{"peer", token(s.peer_id)}});
    }
  }
  for (const ConnId conn : dead) drop_session(conn, true);
  sweep_timer_ = rt_.schedule(cfg_.liveness_sweep_ms, [this] { sweep_liveness(); });
}

void BrokerNode::sweep_reply_routes() {
  const std::int64_t cutoff = rt_.now_ms() - cfg_.reply_route_retention_ms;
  for (auto it = reply_routes_.begin(); it != reply_routes_.end();) {
    it = it->second.created_ms <= cutoff ? reply_routes_.erase(it) : std::next(it);
  }
  const std::int64_t gc_every = std::max<std::int64_t>(1000, cfg_.reply_route_retention_ms / 4);
  gc_timer_ = rt_.schedule(gc_every, [this] { sweep_reply_routes(); });
}

}  // namespace geofaas
