#include "geofaas/bridge.hpp"

#include <stdexcept>
#include <variant>

namespace geofaas {

namespace {

std::string token(std::string s) {
  for (char& ch : s) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') ch = '_';
  }
  return s.empty() ? std::string("-") : s;
}

}  // namespace

BridgeNode::BridgeNode(NodeRuntime& rt, ConnRouter& router, BridgeConfig cfg,
                       std::vector<ExecutorHandle*> executors)
    : rt_(rt),
      router_(router),
      cfg_(std::move(cfg)),
      executors_(std::move(executors)),
      ids_(cfg_.bridge_id) {
  if (cfg_.bridge_id.empty()) throw std::invalid_argument("bridge needs an id");
  if (cfg_.broker_address.empty()) throw std::invalid_argument("bridge needs a broker address");

  conn_ = router_.connect(cfg_.broker_address, this);
  ControlMessage hello;
  hello.kind = ControlKind::Connect;
  hello.sender_id = cfg_.bridge_id;
  hello.role = PeerRole::Bridge;
  hello.location = cfg_.location;
  rt_.send(conn_, encode(Envelope{hello}));

  if (cfg_.functions.empty()) {
    rt_.record("subscribe_warning", {{"reason", "no_functions_deployed"}});
  }
  for (const std::string& fn : cfg_.functions) {
    std::vector<Topic> wanted;
    if (cfg_.mode == BrokerTier::Edge) {
      wanted.push_back(Topic{fn, TopicKind::Call});
    } else {
      wanted.push_back(Topic{fn, TopicKind::Call});
      wanted.push_back(Topic{fn, TopicKind::Nack});
      wanted.push_back(Topic{fn, TopicKind::CallRetry});
    }
    for (const Topic& t : wanted) {
      ControlMessage sub;
      sub.kind = ControlKind::Subscribe;
      sub.sender_id = cfg_.bridge_id;
      sub.topic = t.render();
      sub.geofence = cfg_.mode == BrokerTier::Edge ? cfg_.service_area : Geofence::world();
      rt_.send(conn_, encode(Envelope{sub}));
    }
  }

  heartbeat_timer_ =
      rt_.schedule(cfg_.heartbeat_interval_ms, [this] { heartbeat(); });
  const std::int64_t sweep_every = std::max<std::int64_t>(1000, cfg_.answered_retention_ms / 4);
  sweep_timer_ = rt_.schedule(sweep_every, [this] { sweep_answered(); });
}

BridgeNode::~BridgeNode() { stop(); }

void BridgeNode::stop() {
  if (stopped_) return;
  stopped_ = true;
  shutting_down_ = true;
  rt_.cancel(heartbeat_timer_);
  rt_.cancel(sweep_timer_);
  if (shutdown_timer_ != 0) rt_.cancel(shutdown_timer_);
  if (conn_ != kNoConn) {
    ControlMessage bye;
    bye.kind = ControlKind::Disconnect;
    bye.sender_id = cfg_.bridge_id;
    rt_.send(conn_, encode(Envelope{bye}));
    rt_.close(conn_);
    router_.forget(conn_);
    conn_ = kNoConn;
  }
  rt_.record("bridge_stopped", {{"bridge", token(cfg_.bridge_id)}});
}

void BridgeNode::shutdown_after(std::size_t results, std::int64_t teardown_ms) {
  shutdown_after_results_ = results;
  teardown_ms_ = teardown_ms;
  rt_.record("shutdown_armed", {{"after_results", std::to_string(results)}});
}

void BridgeNode::on_open(ConnId conn) { (void)conn; }

void BridgeNode::on_close(ConnId conn) {
  if (conn != conn_) return;
  router_.forget(conn_);
  conn_ = kNoConn;
  broker_acked_ = false;
  if (!stopped_) rt_.record("broker_link_lost", {{"broker", token(cfg_.broker_address)}});
}

void BridgeNode::on_data(ConnId conn, std::string_view bytes) {
  if (conn != conn_) return;
  decoder_.feed(bytes);
  while (true) {
    std::optional<Envelope> env;
    try {
      env = decoder_.next();
    } catch (const WireError& e) {
      rt_.record("bad_frame", {{"rule", token(e.rule)}});
      return;
    }
    if (!env) return;
    if (const auto* m = std::get_if<Message>(&*env)) {
      handle_message(*m);
    } else if (const auto* c = std::get_if<ControlMessage>(&*env)) {
      handle_control(*c);
    } else {
      rt_.record("bad_frame", {{"rule", "unexpected_exec_frame"}});
    }
  }
}

void BridgeNode::handle_control(const ControlMessage& c) {
  switch (c.kind) {
    case ControlKind::ConnectAck:
      broker_acked_ = true;
      rt_.record("bridge_online", {{"broker", token(c.broker_id)}});
      return;
    case ControlKind::Pong:
      return;
    case ControlKind::NoSubscriber:
      rt_.record("publish_unmatched", {{"corr", token(c.correlation_id)}});
      return;
    case ControlKind::Error:
      rt_.record("broker_error", {{"detail", token(c.text)}});
      return;
    default:
      rt_.record("control_ignored", {{"kind", std::to_string(static_cast<int>(c.kind))}});
      return;
  }
}

void BridgeNode::handle_message(const Message& m) {
  switch (m.topic.kind) {
    case TopicKind::Call:
      admit(m, "direct");
      return;
    case TopicKind::CallRetry:
      admit(m, "retry");
      return;
    case TopicKind::Nack:
      handle_nack(m);
      return;
    case TopicKind::Ack:
    case TopicKind::Result:
      rt_.record("reply_ignored", {{"corr", token(m.correlation_id)}});
      return;
  }
}

void BridgeNode::handle_nack(const Message& nack) {
  if (cfg_.mode != BrokerTier::Cloud) {
    rt_.record("nack_ignored", {{"corr", token(nack.correlation_id)}, {"reason", "edge_mode"}});
    return;
  }
  Message original;
  try {
    Envelope env = decode(nack.payload);
    original = std::get<Message>(env);
  } catch (...) {
    if (active_.count(nack.correlation_id) != 0 || answered_.count(nack.correlation_id) != 0) {
      rt_.record("call_suppressed", {{"corr", token(nack.correlation_id)},
                                     {"origin", "offload"},
                                     {"reason", "duplicate"}});
      return;
    }
    rt_.record("nack_bad_payload", {{"corr", token(nack.correlation_id)}});
    answered_[nack.correlation_id] = rt_.now_ms();
    // Answer the correlation anyway so the client is not left waiting.
    Message pseudo;
    pseudo.msg_id = nack.correlation_id;
    pseudo.correlation_id = nack.correlation_id;
    pseudo.sender_id = nack.sender_id;
    pseudo.topic = Topic{nack.topic.function, TopicKind::Call};
    publish_result(pseudo, "offload", false, "offload payload undecodable");
    return;
  }
  admit(original, "offload");
}

void BridgeNode::admit(const Message& call, const std::string& origin) {
  const std::string& corr = call.correlation_id;
  if (shutting_down_) {
    rt_.record("call_dropped", {{"corr", token(corr)}, {"reason", "teardown"}});
    return;
  }
  if (active_.count(corr) != 0 || answered_.count(corr) != 0) {
    rt_.record("call_suppressed",
               {{"corr", token(corr)}, {"origin", origin}, {"reason", "duplicate"}});
    return;
  }
  rt_.record("call_received", {{"corr", token(corr)},
                               {"fn", token(call.topic.function)},
                               {"origin", origin},
                               {"from", token(call.sender_id)}});
  // The ack goes out on receipt, before any executor work, for direct and
  // retried calls; an offloaded call was acked by the edge that took it.
  if (origin != "offload") {
    publish(make_reply(call, TopicKind::Ack));
    rt_.record("ack_published", {{"corr", token(corr)}});
  }
  if (active_.size() >= cfg_.worker_bound) {
    rt_.record("workers_exhausted", {{"corr", token(corr)}});
    answered_[corr] = rt_.now_ms();
    give_up(call, origin, "worker_bound_reached");
    return;
  }
  PendingCall pc;
  pc.call = call;
  pc.origin = origin;
  active_.emplace(corr, std::move(pc));
  attempt(corr);
}

void BridgeNode::attempt(const std::string& corr) {
  const auto it = active_.find(corr);
  if (it == active_.end()) return;
  PendingCall& pc = it->second;
  if (pc.next_executor >= executors_.size()) {
    const PendingCall done = std::move(pc);
    active_.erase(it);
    answered_[corr] = rt_.now_ms();
    give_up(done.call, done.origin,
            done.last_error.empty() ? "no_executors_configured" : done.last_error);
    return;
  }
  const std::size_t idx = pc.next_executor++;
  ExecutorHandle* exec = executors_[idx];
  rt_.record("exec_attempt", {{"corr", token(corr)},
                              {"exec", std::to_string(idx) + ":" + token(exec->describe())},
                              {"origin", pc.origin}});
  exec->invoke(pc.call.topic.function, pc.call.payload, cfg_.offload_deadline_ms,
               [this, corr, idx](InvokeResult r) {
                 const auto cit = active_.find(corr);
                 if (cit == active_.end()) return;  // settled elsewhere (shutdown)
                 if (r.status == InvokeStatus::Ok) {
                   const PendingCall done = std::move(cit->second);
                   active_.erase(cit);
                   answered_[corr] = rt_.now_ms();
                   publish_result(done.call, done.origin, true, r.output);
                   return;
                 }
                 rt_.record("exec_failed", {{"corr", token(corr)},
                                            {"exec", std::to_string(idx)},
                                            {"status", std::string(to_string(r.status))}});
                 cit->second.last_error =
                     r.output.empty() ? std::string(to_string(r.status)) : r.output;
                 attempt(corr);
               });
}

void BridgeNode::give_up(const Message& call, const std::string& origin,
                         const std::string& reason) {
  if (cfg_.mode == BrokerTier::Edge) {
    // Offload: the nack carries the complete original call so the cloud can
    // serve it without any further lookup and reply straight to the client.
    Message nack = make_reply(call, TopicKind::Nack);
    nack.payload = encode(Envelope{call});
    publish(nack);
    rt_.record("offload_published", {{"corr", token(call.correlation_id)},
                                     {"reason", token(reason)}});
  } else {
    publish_result(call, origin, false, reason);
  }
}

void BridgeNode::publish_result(const Message& call, const std::string& origin, bool ok,
                                const std::string& body) {
  Message result = make_reply(call, TopicKind::Result);
  result.payload = (ok ? "ok:" : "err:") + body;
  publish(result);
  ++results_published_;
  rt_.record("result_published", {{"corr", token(call.correlation_id)},
                                  {"status", ok ? "ok" : "error"},
                                  {"origin", origin}});
  if (shutdown_after_results_ != 0 && results_published_ == shutdown_after_results_ &&
      !shutting_down_) {
    shutting_down_ = true;
    rt_.record("teardown_begun", {{"after_results", std::to_string(results_published_)}});
    shutdown_timer_ = rt_.schedule(teardown_ms_, [this] { finish_shutdown(); });
  }
}

Message BridgeNode::make_reply(const Message& call, TopicKind kind) {
  Message m;
  m.msg_id = ids_.next();
  m.correlation_id = call.correlation_id;
  m.sender_id = cfg_.bridge_id;
  m.sender_location = cfg_.location;
  m.topic = Topic{call.topic.function, kind};
  return m;
}

void BridgeNode::publish(const Message& m) {
  if (conn_ == kNoConn) {
    rt_.record("publish_dropped", {{"corr", token(m.correlation_id)}, {"reason", "no_broker"}});
    return;
  }
  rt_.send(conn_, encode(Envelope{m}));
}

void BridgeNode::heartbeat() {
  if (conn_ != kNoConn) {
    ControlMessage ping;
    ping.kind = ControlKind::Ping;
    ping.sender_id = cfg_.bridge_id;
    rt_.send(conn_, encode(Envelope{ping}));
  }
  heartbeat_timer_ = rt_.schedule(cfg_.heartbeat_interval_ms, [this] { heartbeat(); });
}

void BridgeNode::finish_shutdown() {
  shutdown_timer_ = 0;
  rt_.record("bridge_offline", {{"reason", "scripted_shutdown"}});
  stop();
}

void BridgeNode::sweep_answered() {
  const std::int64_t cutoff = rt_.now_ms() - cfg_.answered_retention_ms;
  for (auto it = answered_.begin(); it != answered_.end();) {
    it = it->second <= cutoff ? answered_.erase(it) : std::next(it);
  }
  const std::int64_t sweep_every = std::max<std::int64_t>(1000, cfg_.answered_retention_ms / 4);
  sweep_timer_ = rt_.schedule(sweep_every, [this] { sweep_answered(); });
}

}  // namespace geofaas
