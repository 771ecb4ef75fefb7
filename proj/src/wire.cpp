#include "geofaas/wire.hpp"

#include <array>
#include <json.hpp>

namespace geofaas {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::array<std::pair<TopicKind, std::string_view>, 5> kTopicSuffix = {{
    {TopicKind::Call, "call"},
    {TopicKind::Ack, "ack"},
    {TopicKind::Result, "result"},
    {TopicKind::Nack, "nack"},
    {TopicKind::CallRetry, "call/retry"},
}};

constexpr std::array<std::pair<ControlKind, std::string_view>, 11> kControlNames = {{
    {ControlKind::Connect, "connect"},
    {ControlKind::ConnectAck, "connect_ack"},
    {ControlKind::LocationUpdate, "location_update"},
    {ControlKind::Handoff, "handoff"},
    {ControlKind::Subscribe, "subscribe"},
    {ControlKind::Unsubscribe, "unsubscribe"},
    {ControlKind::Ping, "ping"},
    {ControlKind::Pong, "pong"},
    {ControlKind::Disconnect, "disconnect"},
    {ControlKind::NoSubscriber, "no_subscriber"},
    {ControlKind::Error, "error"},
}};

constexpr std::array<std::pair<PeerRole, std::string_view>, 3> kRoleNames = {{
    {PeerRole::Client, "client"},
    {PeerRole::Bridge, "bridge"},
    {PeerRole::Broker, "broker"},
}};

constexpr std::array<std::pair<InvokeStatus, std::string_view>, 5> kStatusNames = {{
    {InvokeStatus::Ok, "ok"},
    {InvokeStatus::Overloaded, "overloaded"},
    {InvokeStatus::FunctionError, "function_error"},
    {InvokeStatus::Timeout, "timeout"},
}};

template <typename Table, typename K>
std::string_view name_of(const Table& table, K key) {
  for (const auto& [k, v] : table) {
    if (k == key) return v;
  }
  throw std::logic_error("unmapped enum value");
}

template <typename Table>
auto key_of(const Table& table, std::string_view name) {
  for (const auto& [k, v] : table) {
    if (v == name) return k;
  }
  throw WireError("malformed body", "unknown name '" + std::string(name) + "'");
}

constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(std::string_view in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 3 <= in.size()) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                       (static_cast<unsigned char>(in[i + 1]) << 8) |
                       static_cast<unsigned char>(in[i + 2]);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
    i += 3;
  }
  if (i + 1 == in.size()) {
    const unsigned v = static_cast<unsigned char>(in[i]) << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == in.size()) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                       (static_cast<unsigned char>(in[i + 1]) << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string b64_decode(std::string_view in) {
  if (in.size() % 4 != 0) throw WireError("malformed body", "base64 length not a multiple of 4");
  std::array<int, 256> rev;
  rev.fill(-1);
  for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(kB64[i])] = i;
  std::string out;
  out.reserve(in.size() / 4 * 3);
  for (size_t i = 0; i < in.size(); i += 4) {
    int pad = 0;
    unsigned v = 0;
    for (size_t j = 0; j < 4; ++j) {
      const char c = in[i + j];
      if (c == '=' && i + 4 == in.size() && j >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = rev[static_cast<unsigned char>(c)];
      if (d < 0 || pad) throw WireError("malformed body", "invalid base64 character");
      v = (v << 6) | static_cast<unsigned>(d);
    }
    out += static_cast<char>((v >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(v & 0xff);
  }
  return out;
}

// Body field order is fixed; decode(encode(m)) must be identity.
ordered_json to_body(const Message& m) {
  ordered_json j;
  j["t"] = "msg";
  j["id"] = m.msg_id;
  j["corr"] = m.correlation_id;
  j["sender"] = m.sender_id;
  j["lat"] = m.sender_location.lat;
  j["lon"] = m.sender_location.lon;
  j["topic"] = m.topic.render();
  j["payload"] = b64_encode(m.payload);
  if (!m.reply_broker.empty()) j["reply_broker"] = m.reply_broker;
  return j;
}

ordered_json to_body(const ControlMessage& c) {
  ordered_json j;
  j["t"] = "ctl";
  j["kind"] = name_of(kControlNames, c.kind);
  j["sender"] = c.sender_id;
  switch (c.kind) {
    case ControlKind::Connect:
      j["role"] = name_of(kRoleNames, c.role);
      j["lat"] = c.location.lat;
      j["lon"] = c.location.lon;
      break;
    case ControlKind::LocationUpdate:
      j["lat"] = c.location.lat;
      j["lon"] = c.location.lon;
      break;
    case ControlKind::ConnectAck:
    case ControlKind::Handoff:
      j["broker"] = c.broker_id;
      break;
    case ControlKind::Subscribe:
      j["topic"] = c.topic;
      j["fence"] = c.geofence ? c.geofence->to_text() : "world";
      break;
    case ControlKind::Unsubscribe:
      j["topic"] = c.topic;
      break;
    case ControlKind::NoSubscriber:
      j["corr"] = c.correlation_id;
      break;
    case ControlKind::Error:
      j["text"] = c.text;
      break;
    case ControlKind::Ping:
    case ControlKind::Pong:
    case ControlKind::Disconnect:
      break;
  }
  return j;
}

ordered_json to_body(const ExecRequest& r) {
  ordered_json j;
  j["t"] = "exec";
  j["id"] = r.req_id;
  j["fn"] = r.function;
  j["payload"] = b64_encode(r.payload);
  return j;
}

ordered_json to_body(const ExecResponse& r) {
  ordered_json j;
  j["t"] = "exec_r";
  j["id"] = r.req_id;
  j["status"] = name_of(kStatusNames, r.status);
  j["output"] = b64_encode(r.output);
  return j;
}

std::string require_string(const ordered_json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw WireError("malformed body", std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

double require_number(const ordered_json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw WireError("malformed body", std::string("missing numeric field '") + key + "'");
  }
  return it->get<double>();
}

Envelope from_body(const ordered_json& j) {
  const std::string t = require_string(j, "t");
  if (t == "msg") {
    Message m;
    m.msg_id = require_string(j, "id");
    m.correlation_id = require_string(j, "corr");
    m.sender_id = require_string(j, "sender");
    m.sender_location = {require_number(j, "lat"), require_number(j, "lon")};
    m.topic = Topic::parse(require_string(j, "topic"));
    m.payload = b64_decode(require_string(j, "payload"));
    if (j.contains("reply_broker")) m.reply_broker = require_string(j, "reply_broker");
    return m;
  }
  if (t == "ctl") {
    ControlMessage c;
    c.kind = key_of(kControlNames, require_string(j, "kind"));
    c.sender_id = require_string(j, "sender");
    switch (c.kind) {
      case ControlKind::Connect:
        c.role = key_of(kRoleNames, require_string(j, "role"));
        c.location = {require_number(j, "lat"), require_number(j, "lon")};
        break;
      case ControlKind::LocationUpdate:
        c.location = {require_number(j, "lat"), require_number(j, "lon")};
        break;
      case ControlKind::ConnectAck:
      case ControlKind::Handoff:
        c.broker_id = require_string(j, "broker");
        break;
      case ControlKind::Subscribe:
        c.topic = require_string(j, "topic");
        try {
          c.geofence = Geofence::parse(require_string(j, "fence"));
        } catch (const std::invalid_argument& e) {
          throw WireError("malformed body", e.what());
        }
        break;
      case ControlKind::Unsubscribe:
        c.topic = require_string(j, "topic");
        break;
      case ControlKind::NoSubscriber:
        c.correlation_id = require_string(j, "corr");
        break;
      case ControlKind::Error:
        c.text = require_string(j, "text");
        break;
      case ControlKind::Ping:
      case ControlKind::Pong:
      case ControlKind::Disconnect:
        break;
    }
    return c;
  }
  if (t == "exec") {
    ExecRequest r;
    r.req_id = require_string(j, "id");
    r.function = require_string(j, "fn");
    r.payload = b64_decode(require_string(j, "payload"));
    return r;
  }
  if (t == "exec_r") {
    ExecResponse r;
    r.req_id = require_string(j, "id");
    r.status = key_of(kStatusNames, require_string(j, "status"));
    r.output = b64_decode(require_string(j, "output"));
    return r;
  }
  throw WireError("malformed body", "unknown envelope type '" + t + "'");
}

Envelope decode_body(std::string_view body) {
  if (body.empty()) throw WireError("truncated frame", "empty frame body");
  if (static_cast<std::uint8_t>(body[0]) != kWireVersion) {
    throw WireError("bad version", "version byte " + std::to_string(body[0]));
  }
  ordered_json j = ordered_json::parse(body.substr(1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw WireError("malformed body", "body is not a JSON object");
  return from_body(j);
}

}  // namespace

std::string Topic::render() const {
  if (function.empty() || function.find('/') != std::string::npos) {
    throw std::invalid_argument("function name must be a non-empty token without '/'");
  }
  return "/" + function + "/" + std::string(name_of(kTopicSuffix, kind));
}

Topic Topic::parse(std::string_view text) {
  if (text.size() < 2 || text.front() != '/') {
    throw WireError("malformed body", "topic must start with '/'");
  }
  const auto rest = text.substr(1);
  const auto slash = rest.find('/');
  if (slash == std::string_view::npos || slash == 0) {
    throw WireError("malformed body", "topic must be /<function>/<kind>");
  }
  const auto fn = rest.substr(0, slash);
  const auto suffix = rest.substr(slash + 1);
  for (const auto& [kind, name] : kTopicSuffix) {
    if (suffix == name) return Topic{std::string(fn), kind};
  }
  throw WireError("malformed body", "unknown topic kind '" + std::string(suffix) + "'");
}

std::vector<Topic> topics_for_function(std::string_view function) {
  if (function.empty() || function.find('/') != std::string_view::npos) {
    throw std::invalid_argument("function name must be a non-empty token without '/'");
  }
  std::vector<Topic> out;
  out.reserve(kTopicSuffix.size());
  for (const auto& [kind, _] : kTopicSuffix) out.push_back(Topic{std::string(function), kind});
  return out;
}

std::string_view to_string(InvokeStatus s) { return name_of(kStatusNames, s); }

InvokeStatus invoke_status_from(std::string_view s) { return key_of(kStatusNames, s); }

std::string encode(const Envelope& e) {
  const ordered_json body = std::visit([](const auto& v) { return to_body(v); }, e);
  std::string payload;
  payload += static_cast<char>(kWireVersion);
  payload += body.dump();
  if (payload.size() > kMaxFrameBytes) {
    throw WireError("oversize frame", std::to_string(payload.size()) + " bytes");
  }
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out += static_cast<char>((n >> 24) & 0xff);
  out += static_cast<char>((n >> 16) & 0xff);
  out += static_cast<char>((n >> 8) & 0xff);
  out += static_cast<char>(n & 0xff);
  out += payload;
  return out;
}

Envelope decode(std::string_view bytes) {
  if (bytes.size() < 4) throw WireError("truncated frame", "missing length prefix");
  const std::uint32_t n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[0])) << 24) |
                          (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[1])) << 16) |
                          (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[2])) << 8) |
                          static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[3]));
  if (n > kMaxFrameBytes) throw WireError("oversize frame", std::to_string(n) + " bytes declared");
  if (bytes.size() - 4 < n) throw WireError("truncated frame", "frame body incomplete");
  return decode_body(bytes.substr(4, n));
}

std::optional<Envelope> FrameDecoder::next() {
  if (buf_.size() < 4) return std::nullopt;
  const std::uint32_t n = (static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[0])) << 24) |
                          (static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[1])) << 16) |
                          (static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[2])) << 8) |
                          static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[3]));
  if (n > kMaxFrameBytes) throw WireError("oversize frame", std::to_string(n) + " bytes declared");
  if (buf_.size() - 4 < n) return std::nullopt;
  Envelope e = decode_body(std::string_view(buf_).substr(4, n));
  buf_.erase(0, 4 + n);
  return e;
}

}  // namespace geofaas
