#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "geofaas/geo.hpp"

namespace geofaas {

/// Decode failure; `rule` names the violated framing/body rule
/// ("truncated frame", "oversize frame", "bad version", "malformed body").
struct WireError : std::runtime_error {
  WireError(std::string rule_name, const std::string& detail)
      : std::runtime_error(rule_name + ": " + detail), rule(std::move(rule_name)) {}
  std::string rule;
};

enum class TopicKind { Call, Ack, Result, Nack, CallRetry };

/// Per-function topic. Rendered forms: /f/call /f/ack /f/result /f/nack /f/call/retry.
struct Topic {
  std::string function;
  TopicKind kind = TopicKind::Call;

  std::string render() const;
  static Topic parse(std::string_view text);

  bool operator==(const Topic&) const = default;
  auto operator<=>(const Topic&) const = default;
};

/// The five topics a deployed function owns, in table order.
std::vector<Topic> topics_for_function(std::string_view function);

/// Application envelope published on a topic. Payload is opaque bytes.
struct Message {
  std::string msg_id;
  std::string correlation_id;  // == msg_id for Call/CallRetry, the call's msg_id otherwise
  std::string sender_id;
  GeoPoint sender_location{};
  Topic topic;
  std::string payload;
  std::string reply_broker;  // set when delivered through a draining (handed-off) session

  bool operator==(const Message&) const = default;
};

enum class ControlKind {
  Connect,
  ConnectAck,
  LocationUpdate,
  Handoff,
  Subscribe,
  Unsubscribe,
  Ping,
  Pong,
  Disconnect,
  NoSubscriber,  // publisher notice: no matching subscription anywhere
  Error,         // protocol error reply
};

/// Connecting peer role, sent with Connect.
enum class PeerRole { Client, Bridge, Broker };

struct ControlMessage {
  ControlKind kind = ControlKind::Ping;
  std::string sender_id;
  PeerRole role = PeerRole::Client;        // Connect
  GeoPoint location{};                     // Connect, LocationUpdate
  std::string broker_id;                   // ConnectAck, Handoff target
  std::string topic;                       // Subscribe, Unsubscribe (rendered form)
  std::optional<Geofence> geofence;        // Subscribe
  std::string correlation_id;              // NoSubscriber
  std::string text;                        // Error detail

  bool operator==(const ControlMessage&) const = default;
};

/// Outcome of one function invocation attempt on an executor.
enum class InvokeStatus { Ok, Overloaded, FunctionError, Timeout };

std::string_view to_string(InvokeStatus s);
InvokeStatus invoke_status_from(std::string_view s);

/// Request/response pair spoken on bridge <-> executor connections.
struct ExecRequest {
  std::string req_id;
  std::string function;
  std::string payload;

  bool operator==(const ExecRequest&) const = default;
};

struct ExecResponse {
  std::string req_id;
  InvokeStatus status = InvokeStatus::Ok;
  std::string output;  // result bytes, or the error detail for failures

  bool operator==(const ExecResponse&) const = default;
};

using Envelope = std::variant<Message, ControlMessage, ExecRequest, ExecResponse>;

/// Frame: 4-byte big-endian length, 1 version byte (0x01), UTF-8 JSON body.
/// The length counts the version byte plus the body; frames above 16 MiB are rejected.
std::string encode(const Envelope& e);

/// Decodes exactly one complete frame. Throws WireError.
Envelope decode(std::string_view bytes);

inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;
inline constexpr std::uint8_t kWireVersion = 0x01;

/// Incremental decoder over a byte stream; holds at most one partial frame.
class FrameDecoder {
 public:
  void feed(std::string_view bytes) { buf_.append(bytes.data(), bytes.size()); }

  /// Next complete frame, or nullopt if more bytes are needed. Throws WireError.
  std::optional<Envelope> next();

  size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
};

/// Collision-free message ids without coordination: "<sender>-<counter>".
class MsgIdGen {
 public:
  explicit MsgIdGen(std::string sender_id) : sender_(std::move(sender_id)) {}
  std::string next() { return sender_ + "-" + std::to_string(++counter_); }

 private:
  std::string sender_;
  std::uint64_t counter_ = 0;
};

}  // namespace geofaas
