#include "geofaas/client.hpp"

#include <stdexcept>
#include <utility>

namespace geofaas {

namespace {

// Event-log fields must be whitespace-free tokens.
std::string token(std::string s) {
  if (s.empty()) return "-";
  for (char& ch : s) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') ch = '_';
  }
  return s;
}

}  // namespace

std::string to_string(CallPhase p) {
  switch (p) {
    case CallPhase::Sent: return "sent";
    case CallPhase::Acked: return "acked";
    case CallPhase::Resolved: return "resolved";
    case CallPhase::Failed: return "failed";
  }
  return "unknown";
}

ClientCore::ClientCore(NodeRuntime& rt, ConnRouter& router, Registry registry, ClientConfig cfg)
    : rt_(rt),
      router_(router),
      registry_(std::move(registry)),
      cfg_(std::move(cfg)),
      ids_(cfg_.client_id),
      location_(cfg_.location) {
  if (cfg_.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  if (cfg_.ack_timeout_ms > cfg_.result_timeout_ms) {
    throw std::invalid_argument("ack timeout must not exceed result timeout");
  }
}

ClientCore::~ClientCore() { stop(); }

void ClientCore::connect(Done done) {
  if (session_ != Session::Idle) throw std::logic_error("connect: session already active");
  pending_done_ = std::move(done);
  redirect_hops_ = 0;
  dial(cfg_.bootstrap_address);
}

void ClientCore::dial(const std::string& address) {
  session_ = Session::Connecting;
  conn_ = router_.connect(address, this);
  open_.emplace(conn_, FrameDecoder{});
  ControlMessage hello;
  hello.kind = ControlKind::Connect;
  hello.sender_id = cfg_.client_id;
  hello.role = PeerRole::Client;
  hello.location = location_;
  rt_.send(conn_, encode(Envelope{hello}));
  rt_.record("dial", {{"address", token(address)}});
}

void ClientCore::update_location(GeoPoint p, Done done) {
  if (session_ != Session::Ready) throw std::logic_error("update_location: session not ready");
  pending_done_ = std::move(done);
  session_ = Session::Relocating;
  redirect_hops_ = 0;
  location_ = p;
  ControlMessage update;
  update.kind = ControlKind::LocationUpdate;
  update.sender_id = cfg_.client_id;
  update.role = PeerRole::Client;
  update.location = p;
  rt_.send(conn_, encode(Envelope{update}));
  rt_.record("location_sent", {{"lat", std::to_string(p.lat)},
                               {"lon", std::to_string(p.lon)}});
}

std::string ClientCore::start_call(const std::string& function, std::string payload) {
  if (session_ != Session::Ready) throw std::logic_error("start_call: session not ready");
  Message m;
  m.msg_id = ids_.next();
  m.correlation_id = m.msg_id;
  m.sender_id = cfg_.client_id;
  m.sender_location = location_;
  m.topic = Topic{function, TopicKind::Call};
  m.payload = std::move(payload);

  CallState c;
  c.call_id = m.correlation_id;
  c.correlation_id = m.correlation_id;
  c.function = function;
  c.payload = m.payload;
  c.sent_ms = rt_.now_ms();
  auto [it, inserted] = calls_.emplace(c.call_id, std::move(c));
  corr_alias_.emplace(it->first, it->first);
  arm_timers(it->second);

  publish(m);
  rt_.record("call_sent", {{"corr", it->first}, {"fn", token(function)}, {"attempt", "1"}});
  return it->first;
}

const CallState* ClientCore::poll(const std::string& call_id) const {
  auto it = calls_.find(call_id);
  return it == calls_.end() ? nullptr : &it->second;
}

bool ClientCore::idle() const {
  for (const auto& [id, c] : calls_) {
    if (c.phase != CallPhase::Resolved && c.phase != CallPhase::Failed) return false;
  }
  return true;
}

void ClientCore::stop() {
  if (stopped_) return;
  stopped_ = true;
  for (auto& [c, call] : calls_) cancel_timers(call);
  for (auto& [conn, dec] : open_) {
    if (conn == conn_ && session_ != Session::Idle) {
      ControlMessage bye;
      bye.kind = ControlKind::Disconnect;
      bye.sender_id = cfg_.client_id;
      bye.role = PeerRole::Client;
      rt_.send(conn, encode(Envelope{bye}));
    }
    rt_.close(conn);
    router_.forget(conn);
  }
  open_.clear();
  conn_ = kNoConn;
  session_ = Session::Idle;
  rt_.record("client_stopped", {});
}

void ClientCore::on_open(ConnId) {}

void ClientCore::on_data(ConnId conn, std::string_view bytes) {
  if (stopped_) return;
  auto it = open_.find(conn);
  if (it == open_.end()) return;
  it->second.feed(bytes);
  while (true) {
    it = open_.find(conn);  // handlers may drop sessions
    if (it == open_.end()) return;
    std::optional<Envelope> env;
    try {
      env = it->second.next();
    } catch (const WireError& e) {
      rt_.record("protocol_error", {{"reason", token(e.what())}});
      rt_.close(conn);
      router_.forget(conn);
      open_.erase(conn);
      if (conn == conn_) {
        conn_ = kNoConn;
        session_ = Session::Idle;
      }
      return;
    }
    if (!env) return;
    if (const auto* ctl = std::get_if<ControlMessage>(&*env)) {
      handle_control(conn, *ctl);
    } else if (const auto* msg = std::get_if<Message>(&*env)) {
      handle_reply(*msg);
    } else {
      rt_.record("protocol_error", {{"reason", "unexpected_exec_frame"}});
    }
  }
}

void ClientCore::on_close(ConnId conn) {
  if (stopped_) return;
  const bool current = (conn == conn_);
  open_.erase(conn);
  if (!current) {
    rt_.record("drained_session_closed", {});
    return;
  }
  conn_ = kNoConn;
  if (session_ == Session::Connecting) {
    rt_.record("connect_failed", {{"reason", "connection_refused"}});
    session_ = Session::Idle;
    finish_pending(false);
    return;
  }
  rt_.record("session_lost", {{"broker", token(connected_broker_)}});
  session_ = Session::Idle;
  connected_broker_.clear();
  if (pending_done_) finish_pending(false);
}

void ClientCore::handle_control(ConnId conn, const ControlMessage& c) {
  switch (c.kind) {
    case ControlKind::ConnectAck:
      if (session_ == Session::Connecting && conn == conn_) {
        connected_broker_ = c.broker_id.empty() ? c.sender_id : c.broker_id;
        subscribe_all();
        session_ = Session::Ready;
        rt_.record("connected", {{"broker", token(connected_broker_)},
                                 {"hops", std::to_string(redirect_hops_)}});
        finish_pending(true);
      } else if (session_ == Session::Relocating && conn == conn_) {
        session_ = Session::Ready;
        rt_.record("location_ok", {{"broker", token(connected_broker_)}});
        finish_pending(true);
      } else {
        rt_.record("stray_control", {{"kind", "connect_ack"}});
      }
      return;
    case ControlKind::Handoff:
      if (conn != conn_ || (session_ != Session::Connecting && session_ != Session::Relocating)) {
        rt_.record("stray_control", {{"kind", "handoff"}});
        return;
      }
      if (session_ == Session::Connecting) {
        // Still joining: nothing in flight on this session, drop it eagerly.
        rt_.close(conn);
        router_.forget(conn);
        open_.erase(conn);
        conn_ = kNoConn;
      } else {
        // Relocating: leave the old session open so in-flight replies drain.
        rt_.record("session_handoff", {{"to", token(c.broker_id)}});
      }
      follow_handoff(c.broker_id);
      return;
    case ControlKind::NoSubscriber:
      handle_no_subscriber(c.correlation_id);
      return;
    case ControlKind::Error:
      rt_.record("broker_error", {{"detail", token(c.text)}});
      return;
    case ControlKind::Pong:
      return;
    default:
      rt_.record("stray_control", {{"kind", "other"}});
      return;
  }
}

void ClientCore::follow_handoff(const std::string& target_broker) {
  ++redirect_hops_;
  if (redirect_hops_ > registry_.records().size()) {
    rt_.record("connect_failed", {{"reason", "redirect_loop"}});
    session_ = Session::Idle;
    finish_pending(false);
    return;
  }
  const BrokerRecord* rec = registry_.find(target_broker);
  if (rec == nullptr) {
    rt_.record("connect_failed", {{"reason", "unknown_broker"}, {"broker", token(target_broker)}});
    session_ = Session::Idle;
    finish_pending(false);
    return;
  }
  rt_.record("redirect", {{"to", token(target_broker)}});
  dial(rec->address);
}

void ClientCore::subscribe_all() {
  for (const std::string& fn : cfg_.functions) {
    for (TopicKind kind : {TopicKind::Ack, TopicKind::Result}) {
      ControlMessage sub;
      sub.kind = ControlKind::Subscribe;
      sub.sender_id = cfg_.client_id;
      sub.role = PeerRole::Client;
      sub.topic = Topic{fn, kind}.render();
      rt_.send(conn_, encode(Envelope{sub}));
    }
  }
}

void ClientCore::finish_pending(bool ok) {
  if (!pending_done_) return;
  Done done = std::move(pending_done_);
  pending_done_ = nullptr;
  done(ok);
}

CallState* ClientCore::by_corr(const std::string& corr) {
  auto alias = corr_alias_.find(corr);
  if (alias == corr_alias_.end()) return nullptr;
  auto it = calls_.find(alias->second);
  return it == calls_.end() ? nullptr : &it->second;
}

void ClientCore::arm_timers(CallState& c) {
  const std::string id = c.call_id;
  c.ack_timer = rt_.schedule(cfg_.ack_timeout_ms, [this, id] {
    CallState* call = by_corr(id);
    if (call == nullptr || call->phase != CallPhase::Sent) return;
    call->ack_timer = 0;
    rt_.record("ack_timeout", {{"corr", id}, {"attempt", std::to_string(call->attempts)}});
    cancel_timers(*call);
    retry_or_fail(*call);
  });
  c.result_timer = rt_.schedule(cfg_.result_timeout_ms, [this, id] {
    CallState* call = by_corr(id);
    if (call == nullptr ||
        (call->phase != CallPhase::Sent && call->phase != CallPhase::Acked)) {
      return;
    }
    call->result_timer = 0;
    rt_.record("result_timeout", {{"corr", id}, {"attempt", std::to_string(call->attempts)}});
    cancel_timers(*call);
    retry_or_fail(*call);
  });
}

void ClientCore::cancel_timers(CallState& c) {
  if (c.ack_timer != 0) rt_.cancel(c.ack_timer);
  if (c.result_timer != 0) rt_.cancel(c.result_timer);
  c.ack_timer = 0;
  c.result_timer = 0;
}

void ClientCore::retry_or_fail(CallState& c) {
  if (c.attempts <= cfg_.max_retries) {
    ++c.attempts;
    Message m;
    m.msg_id = ids_.next();
    m.correlation_id = m.msg_id;
    m.sender_id = cfg_.client_id;
    m.sender_location = location_;
    m.topic = Topic{c.function, TopicKind::CallRetry};
    m.payload = c.payload;
    corr_alias_.emplace(m.correlation_id, c.call_id);
    c.correlation_id = m.correlation_id;
    arm_timers(c);
    publish(m);
    rt_.record("call_retry_sent", {{"corr", c.correlation_id},
                                   {"call", c.call_id},
                                   {"attempt", std::to_string(c.attempts)}});
    return;
  }
  c.phase = CallPhase::Failed;
  c.failure = c.attempts > 1 ? "cloud_retry_failed" : (c.ever_acked ? "no_result" : "no_ack");
  rt_.record("call_failed", {{"corr", c.call_id}, {"reason", c.failure}});
  if (observer_) observer_(c);
}

void ClientCore::handle_reply(const Message& m) {
  CallState* c = by_corr(m.correlation_id);
  if (c == nullptr) {
    rt_.record("reply_unmatched", {{"corr", m.correlation_id}});
    return;
  }
  if (m.topic.kind == TopicKind::Ack) {
    if (c->phase != CallPhase::Sent) return;  // late or duplicate ack
    c->phase = CallPhase::Acked;
    c->ever_acked = true;
    c->serving_node_hint = m.sender_id;
    if (!m.reply_broker.empty()) c->reply_broker_hint = m.reply_broker;
    if (c->ack_timer != 0) {
      rt_.cancel(c->ack_timer);
      c->ack_timer = 0;
    }
    rt_.record("call_acked", {{"corr", c->call_id}, {"by", token(m.sender_id)}});
    return;
  }
  if (m.topic.kind == TopicKind::Result) {
    if (c->phase == CallPhase::Resolved || c->phase == CallPhase::Failed) {
      rt_.record("late_result", {{"corr", c->call_id}});
      return;
    }
    cancel_timers(*c);
    c->phase = CallPhase::Resolved;
    c->resolved_ms = rt_.now_ms();
    c->serving_node_hint = m.sender_id;
    if (!m.reply_broker.empty()) c->reply_broker_hint = m.reply_broker;
    if (m.payload.rfind("ok:", 0) == 0) {
      c->ok = true;
      c->result = m.payload.substr(3);
    } else if (m.payload.rfind("err:", 0) == 0) {
      c->ok = false;
      c->result = m.payload.substr(4);
    } else {
      c->ok = false;
      c->result = m.payload;
      rt_.record("result_bad_payload", {{"corr", c->call_id}});
    }
    rt_.record("call_resolved", {{"corr", c->call_id},
                                 {"status", c->ok ? "ok" : "error"},
                                 {"by", token(m.sender_id)},
                                 {"attempts", std::to_string(c->attempts)}});
    if (observer_) observer_(*c);
    return;
  }
  rt_.record("reply_ignored", {{"kind", m.topic.render()}});
}

void ClientCore::handle_no_subscriber(const std::string& corr) {
  CallState* c = by_corr(corr);
  if (c == nullptr || c->phase == CallPhase::Resolved || c->phase == CallPhase::Failed) return;
  rt_.record("no_subscriber", {{"corr", c->call_id}, {"attempt", std::to_string(c->attempts)}});
  cancel_timers(*c);
  retry_or_fail(*c);
}

void ClientCore::publish(const Message& m) {
  if (conn_ == kNoConn) {
    rt_.record("publish_dropped", {{"reason", "no_session"}, {"corr", m.correlation_id}});
    return;
  }
  rt_.send(conn_, encode(Envelope{m}));
}

}  // namespace geofaas
