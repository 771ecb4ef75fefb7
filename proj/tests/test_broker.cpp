#include "geofaas/broker.hpp"

#include <deque>
#include <string>
#include <variant>
#include <vector>

#include "doctest.h"
#include "geofaas/simnet.hpp"

using namespace geofaas;

namespace {

const GeoPoint kCenterB{52.5125, 13.3270};
const GeoPoint kCenterP = destination(kCenterB, 210.0, 20.784609690826528);
const GeoPoint kFarAway{51.0, 12.0};  // outside both hexagons

Registry make_registry() {
  return Registry(1, {
                         {"edge-b", "broker-b", BrokerTier::Edge, Geofence::hexagon(kCenterB, 12.0)},
                         {"edge-p", "broker-p", BrokerTier::Edge, Geofence::hexagon(kCenterP, 12.0)},
                         {"cloud", "broker-c", BrokerTier::Cloud, Geofence::world()},
                     });
}

/// Scripted endpoint: dials a broker, records every decoded envelope.
struct Peer final : NetClient {
  NodeRuntime& rt;
  ConnId conn = kNoConn;
  bool opened = false;
  bool closed = false;
  std::vector<Envelope> inbox;
  FrameDecoder dec;

  Peer(SimNet& net, const std::string& host) : rt(net.add_host(host)) { rt.set_client(this); }
  ~Peer() override { rt.set_client(nullptr); }

  void on_open(ConnId) override { opened = true; }
  void on_data(ConnId, std::string_view bytes) override {
    dec.feed(bytes);
    while (auto e = dec.next()) inbox.push_back(std::move(*e));
  }
  void on_close(ConnId) override { closed = true; }

  void send(const Envelope& e) { rt.send(conn, encode(e)); }

  void connect_as(const std::string& addr, const std::string& id, PeerRole role, GeoPoint at) {
    conn = rt.connect(addr);
    ControlMessage c;
    c.kind = ControlKind::Connect;
    c.sender_id = id;
    c.role = role;
    c.location = at;
    send(Envelope{c});
  }
  void subscribe(const std::string& topic, std::optional<Geofence> fence = std::nullopt) {
    ControlMessage c;
    c.kind = ControlKind::Subscribe;
    c.topic = topic;
    c.geofence = std::move(fence);
    send(Envelope{c});
  }

  template <class T>
  std::vector<T> got() const {
    std::vector<T> out;
    for (const auto& e : inbox) {
      if (const T* v = std::get_if<T>(&e)) out.push_back(*v);
    }
    return out;
  }
};

Message request(const std::string& id, GeoPoint at, TopicKind kind, const std::string& sender) {
  Message m;
  m.msg_id = id;
  m.correlation_id = id;
  m.sender_id = sender;
  m.sender_location = at;
  m.topic = Topic{"sieve", kind};
  m.payload = "10000";
  return m;
}

Message reply(const std::string& corr, TopicKind kind, const std::string& sender, GeoPoint at) {
  Message m;
  m.msg_id = corr + "-" + (kind == TopicKind::Ack ? "a" : "r");
  m.correlation_id = corr;
  m.sender_id = sender;
  m.sender_location = at;
  m.topic = Topic{"sieve", kind};
  m.payload = kind == TopicKind::Result ? "1229" : "";
  return m;
}

struct Cluster {
  SimNet net{42};
  NodeRuntime& rb;
  NodeRuntime& rp;
  NodeRuntime& rc;
  BrokerNode bb;
  BrokerNode bp;
  BrokerNode bc;

  Cluster()
      : rb(net.add_host("broker-b")),
        rp(net.add_host("broker-p")),
        rc(net.add_host("broker-c")),
        bb(rb, make_registry(), BrokerConfig{.broker_id = "edge-b"}),
        bp(rp, make_registry(), BrokerConfig{.broker_id = "edge-p"}),
        bc(rc, make_registry(), BrokerConfig{.broker_id = "cloud"}) {
    net.set_default_latency(1);
    net.set_latency("broker-b", "broker-p", 5);
    net.set_latency("broker-b", "broker-c", 25);
    net.set_latency("broker-p", "broker-c", 25);
  }

  std::vector<EventLog::Parsed> events() { return EventLog::parse(net.log().to_text()); }
  int count(const std::string& node, const std::string& kind) {
    int n = 0;
    for (const auto& ev : events()) n += ev.node == node && ev.kind == kind;
    return n;
  }
  bool has(const std::string& node, const std::string& kind, const std::string& key,
           const std::string& value) {
    for (const auto& ev : events()) {
      if (ev.node != node || ev.kind != kind) continue;
      const auto f = ev.fields.find(key);
      if (f != ev.fields.end() && f->second == value) return true;
    }
    return false;
  }
};

}  // namespace

TEST_CASE("connect is acked by the responsible broker and redirected elsewhere") {
  Cluster cl;
  Peer right(cl.net, "c-right");
  Peer wrong(cl.net, "c-wrong");

  right.connect_as("broker-b", "c-right", PeerRole::Client, kCenterB);
  wrong.connect_as("broker-b", "c-wrong", PeerRole::Client, kCenterP);
  cl.net.run_for(50);

  auto acks = right.got<ControlMessage>();
  REQUIRE(acks.size() == 1);
  CHECK(acks[0].kind == ControlKind::ConnectAck);
  CHECK(acks[0].broker_id == "edge-b");

  auto redirect = wrong.got<ControlMessage>();
  REQUIRE(redirect.size() == 1);
  CHECK(redirect[0].kind == ControlKind::Handoff);
  CHECK(redirect[0].broker_id == "edge-p");
  CHECK_FALSE(wrong.closed);  // drain window holds the session open

  cl.net.run_for(4000);
  CHECK(wrong.closed);  // drained after handoff_drain_ms
  CHECK(cl.has("broker-b", "handoff", "via", "connect"));
}

TEST_CASE("bridge subscriptions appear in the introspection table") {
  Cluster cl;
  Peer bridge(cl.net, "bridge-b");
  bridge.connect_as("broker-b", "bridge-b", PeerRole::Bridge, kCenterB);
  const Geofence area = Geofence::hexagon(kCenterB, 12.0);
  bridge.subscribe("/sieve/call", area);
  cl.net.run_for(20);

  const auto subs = cl.bb.subscriptions();
  REQUIRE(subs.size() == 1);
  CHECK(subs[0] == SubscriptionInfo{"bridge-b", PeerRole::Bridge, "/sieve/call", area.to_text()});
  CHECK(cl.bb.bridge_liveness("bridge-b") == Liveness::Alive);
  CHECK(cl.bb.bridge_liveness("bridge-x") == Liveness::Dead);
}

TEST_CASE("calls reach the matching bridge and replies retrace the path") {
  Cluster cl;
  Peer bridge(cl.net, "bridge-b");
  Peer client(cl.net, "c-1");
  bridge.connect_as("broker-b", "bridge-b", PeerRole::Bridge, kCenterB);
  bridge.subscribe("/sieve/call", Geofence::hexagon(kCenterB, 12.0));
  client.connect_as("broker-b", "c-1", PeerRole::Client, kCenterB);
  client.subscribe("/sieve/ack");
  client.subscribe("/sieve/result");
  cl.net.run_for(20);

  client.send(Envelope{request("x-1", kCenterB, TopicKind::Call, "c-1")});
  cl.net.run_for(20);

  auto calls = bridge.got<Message>();
  REQUIRE(calls.size() == 1);
  CHECK(calls[0].msg_id == "x-1");
  CHECK(calls[0].payload == "10000");

  bridge.send(Envelope{reply("x-1", TopicKind::Ack, "bridge-b", kCenterB)});
  bridge.send(Envelope{reply("x-1", TopicKind::Result, "bridge-b", kCenterB)});
  cl.net.run_for(20);

  auto replies = client.got<Message>();
  REQUIRE(replies.size() == 2);
  CHECK(replies[0].topic.kind == TopicKind::Ack);
  CHECK(replies[1].topic.kind == TopicKind::Result);
  CHECK(replies[1].payload == "1229");
  CHECK(replies[1].reply_broker.empty());  // no handoff happened
  CHECK(cl.has("broker-b", "deliver_local", "to", "bridge-b"));
  CHECK(cl.count("broker-b", "reply_deliver") == 2);
}

TEST_CASE("a call published into the drain window is forwarded, never dropped") {
  Cluster cl;
  Peer bridge_p(cl.net, "bridge-p");
  Peer client(cl.net, "c-2");
  bridge_p.connect_as("broker-p", "bridge-p", PeerRole::Bridge, kCenterP);
  bridge_p.subscribe("/sieve/call", Geofence::hexagon(kCenterP, 12.0));
  cl.net.run_for(20);

  // Client in P territory dials the B broker: it is redirected but publishes
  // its first call through the draining session anyway.
  client.connect_as("broker-b", "c-2", PeerRole::Client, kCenterP);
  client.subscribe("/sieve/ack");
  client.subscribe("/sieve/result");
  client.send(Envelope{request("y-1", kCenterP, TopicKind::Call, "c-2")});
  cl.net.run_for(100);

  auto calls = bridge_p.got<Message>();
  REQUIRE(calls.size() == 1);
  CHECK(calls[0].msg_id == "y-1");

  bridge_p.send(Envelope{reply("y-1", TopicKind::Ack, "bridge-p", kCenterP)});
  bridge_p.send(Envelope{reply("y-1", TopicKind::Result, "bridge-p", kCenterP)});
  cl.net.run_for(100);

  auto replies = client.got<Message>();
  REQUIRE(replies.size() == 2);
  CHECK(replies[1].topic.kind == TopicKind::Result);
  // Replies through a handed-off session carry the new broker as a hint.
  CHECK(replies[0].reply_broker == "edge-p");
  CHECK(replies[1].reply_broker == "edge-p");
  CHECK(cl.has("broker-b", "forward", "to", "edge-p"));
  CHECK(cl.has("broker-p", "reply_forward", "to", "edge-b"));
}

TEST_CASE("a request nobody subscribes to comes back as a no-subscriber notice") {
  Cluster cl;

  SUBCASE("cloud broker is the end of the line") {
    Peer client(cl.net, "c-far");
    client.connect_as("broker-c", "c-far", PeerRole::Client, kFarAway);
    client.subscribe("/sieve/ack");
    cl.net.run_for(20);
    client.send(Envelope{request("z-1", kFarAway, TopicKind::Call, "c-far")});
    cl.net.run_for(20);

    auto ctl = client.got<ControlMessage>();
    REQUIRE(ctl.size() == 2);  // ConnectAck, then the notice
    CHECK(ctl[1].kind == ControlKind::NoSubscriber);
    CHECK(ctl[1].correlation_id == "z-1");
  }

  SUBCASE("notice from a forwarded hop routes back to the origin client") {
    Peer client(cl.net, "c-3");
    client.connect_as("broker-b", "c-3", PeerRole::Client, kCenterB);
    client.subscribe("/sieve/ack");
    cl.net.run_for(20);
    client.send(Envelope{request("z-2", kCenterB, TopicKind::Call, "c-3")});
    cl.net.run_for(200);

    auto ctl = client.got<ControlMessage>();
    REQUIRE(ctl.size() == 2);
    CHECK(ctl[1].kind == ControlKind::NoSubscriber);
    CHECK(ctl[1].correlation_id == "z-2");
    // Forwarded to the cloud (one hop), answered there, never bounced on.
    CHECK(cl.has("broker-b", "forward", "to", "cloud"));
    CHECK(cl.has("broker-c", "no_subscriber", "corr", "z-2"));
    CHECK(cl.count("broker-c", "forward") == 0);
  }
}

TEST_CASE("nack and retry publishes route to the cloud and replies reach the client") {
  Cluster cl;
  Peer bridge_b(cl.net, "bridge-b");
  Peer bridge_c(cl.net, "bridge-c");
  Peer client(cl.net, "c-4");

  bridge_b.connect_as("broker-b", "bridge-b", PeerRole::Bridge, kCenterB);
  bridge_b.subscribe("/sieve/call", Geofence::hexagon(kCenterB, 12.0));
  bridge_c.connect_as("broker-c", "bridge-c", PeerRole::Bridge, GeoPoint{0, 0});
  bridge_c.subscribe("/sieve/call");
  bridge_c.subscribe("/sieve/nack");
  bridge_c.subscribe("/sieve/call/retry");
  client.connect_as("broker-b", "c-4", PeerRole::Client, kCenterB);
  client.subscribe("/sieve/ack");
  client.subscribe("/sieve/result");
  cl.net.run_for(60);

  // Call lands on the edge bridge, which gives up and hands it to the cloud.
  client.send(Envelope{request("w-1", kCenterB, TopicKind::Call, "c-4")});
  cl.net.run_for(20);
  REQUIRE(bridge_b.got<Message>().size() == 1);

  Message nack = request("w-1", kCenterB, TopicKind::Nack, "bridge-b");
  nack.payload = "offload";
  bridge_b.send(Envelope{nack});
  cl.net.run_for(100);

  auto offloaded = bridge_c.got<Message>();
  REQUIRE(offloaded.size() == 1);
  CHECK(offloaded[0].topic.kind == TopicKind::Nack);
  CHECK(offloaded[0].payload == "offload");

  // The cloud bridge answers; replies must reach the client, not the
  // edge bridge that published the nack.
  bridge_c.send(Envelope{reply("w-1", TopicKind::Ack, "bridge-c", GeoPoint{0, 0})});
  bridge_c.send(Envelope{reply("w-1", TopicKind::Result, "bridge-c", GeoPoint{0, 0})});
  cl.net.run_for(100);

  auto replies = client.got<Message>();
  REQUIRE(replies.size() == 2);
  CHECK(replies[0].topic.kind == TopicKind::Ack);
  CHECK(replies[1].topic.kind == TopicKind::Result);
  CHECK(replies[1].sender_id == "bridge-c");
  CHECK(bridge_b.got<Message>().size() == 1);  // nothing came back to it

  // A retry also goes straight to the cloud, not to the local bridge.
  client.send(Envelope{request("w-2", kCenterB, TopicKind::CallRetry, "c-4")});
  cl.net.run_for(100);
  auto at_cloud = bridge_c.got<Message>();
  REQUIRE(at_cloud.size() == 2);
  CHECK(at_cloud[1].topic.kind == TopicKind::CallRetry);
  CHECK(at_cloud[1].msg_id == "w-2");
  CHECK(bridge_b.got<Message>().size() == 1);
}

TEST_CASE("bridge liveness: suspected after one timeout, dead after two") {
  Cluster cl;
  Peer bridge(cl.net, "bridge-b");
  bridge.connect_as("broker-b", "bridge-b", PeerRole::Bridge, kCenterB);
  bridge.subscribe("/sieve/call", Geofence::hexagon(kCenterB, 12.0));
  cl.net.run_for(20);
  CHECK(cl.bb.bridge_liveness("bridge-b") == Liveness::Alive);

  cl.net.run_for(2600);  // past one heartbeat timeout
  CHECK(cl.bb.bridge_liveness("bridge-b") == Liveness::Suspected);
  CHECK(cl.count("broker-b", "bridge_suspected") == 1);

  ControlMessage ping;
  ping.kind = ControlKind::Ping;
  ping.sender_id = "bridge-b";
  bridge.send(Envelope{ping});
  cl.net.run_for(600);
  CHECK(cl.bb.bridge_liveness("bridge-b") == Liveness::Alive);
  CHECK(cl.count("broker-b", "bridge_alive") == 1);
  CHECK(bridge.got<ControlMessage>().size() == 2);  // ConnectAck + Pong

  cl.net.run_for(5000);  // two timeouts of silence
  CHECK(cl.bb.bridge_liveness("bridge-b") == Liveness::Dead);
  CHECK(cl.has("broker-b", "bridge_dead", "reason", "silent"));
  CHECK(cl.bb.subscriptions().empty());

  // Calls published after the death forward to the cloud instead.
  Peer client(cl.net, "c-5");
  client.connect_as("broker-b", "c-5", PeerRole::Client, kCenterB);
  client.subscribe("/sieve/result");
  cl.net.run_for(20);
  client.send(Envelope{request("d-1", kCenterB, TopicKind::Call, "c-5")});
  cl.net.run_for(20);
  CHECK(cl.has("broker-b", "forward", "to", "cloud"));
}

TEST_CASE("a planned disconnect kills the bridge session immediately") {
  Cluster cl;
  Peer bridge(cl.net, "bridge-b");
  bridge.connect_as("broker-b", "bridge-b", PeerRole::Bridge, kCenterB);
  bridge.subscribe("/sieve/call", Geofence::hexagon(kCenterB, 12.0));
  cl.net.run_for(20);

  ControlMessage bye;
  bye.kind = ControlKind::Disconnect;
  bye.sender_id = "bridge-b";
  bridge.send(Envelope{bye});
  cl.net.run_for(20);

  CHECK(cl.bb.bridge_liveness("bridge-b") == Liveness::Dead);
  CHECK(cl.has("broker-b", "bridge_dead", "reason", "disconnect"));
  CHECK(cl.bb.subscriptions().empty());
}

TEST_CASE("location updates ack in-area and hand off across the boundary") {
  Cluster cl;
  Peer client(cl.net, "c-6");
  client.connect_as("broker-b", "c-6", PeerRole::Client, kCenterB);
  cl.net.run_for(20);

  ControlMessage move;
  move.kind = ControlKind::LocationUpdate;
  move.location = destination(kCenterB, 90.0, 2.0);  // still inside the hexagon
  client.send(Envelope{move});
  cl.net.run_for(20);

  auto ctl = client.got<ControlMessage>();
  REQUIRE(ctl.size() == 2);
  CHECK(ctl[1].kind == ControlKind::ConnectAck);
  CHECK(cl.count("broker-b", "location_ok") == 1);

  move.location = kCenterP;  // crossed into the neighbour area
  client.send(Envelope{move});
  cl.net.run_for(20);
  ctl = client.got<ControlMessage>();
  REQUIRE(ctl.size() == 3);
  CHECK(ctl[2].kind == ControlKind::Handoff);
  CHECK(ctl[2].broker_id == "edge-p");
  CHECK(cl.has("broker-b", "handoff", "via", "update"));
  CHECK_FALSE(client.closed);
  cl.net.run_for(3500);
  CHECK(client.closed);
}

TEST_CASE("protocol misuse earns an error reply and a closed connection") {
  Cluster cl;

  SUBCASE("publish before connect") {
    Peer rogue(cl.net, "rogue-1");
    rogue.conn = rogue.rt.connect("broker-b");
    rogue.send(Envelope{request("r-1", kCenterB, TopicKind::Call, "rogue-1")});
    cl.net.run_for(20);
    auto ctl = rogue.got<ControlMessage>();
    REQUIRE(ctl.size() == 1);
    CHECK(ctl[0].kind == ControlKind::Error);
    CHECK(rogue.closed);
    CHECK(cl.has("broker-b", "protocol_error", "reason", "publish_before_connect"));
  }

  SUBCASE("undecodable frame") {
    Peer rogue(cl.net, "rogue-2");
    rogue.conn = rogue.rt.connect("broker-b");
    rogue.rt.send(rogue.conn, std::string("\x00\x00\x00\x01\x77", 5));  // bad version
    cl.net.run_for(20);
    CHECK(rogue.closed);
    CHECK(cl.count("broker-b", "protocol_error") == 1);
  }

  SUBCASE("duplicate connect") {
    Peer rogue(cl.net, "rogue-3");
    rogue.connect_as("broker-b", "rogue-3", PeerRole::Client, kCenterB);
    cl.net.run_for(20);
    ControlMessage again;
    again.kind = ControlKind::Connect;
    again.sender_id = "rogue-3";
    again.role = PeerRole::Client;
    again.location = kCenterB;
    rogue.send(Envelope{again});
    cl.net.run_for(20);
    CHECK(cl.has("broker-b", "protocol_error", "reason", "duplicate_connect"));
    CHECK(rogue.closed);
  }
}

TEST_CASE("replies with no recorded route are dropped, not misdelivered") {
  Cluster cl;
  Peer bridge(cl.net, "bridge-b");
  bridge.connect_as("broker-b", "bridge-b", PeerRole::Bridge, kCenterB);
  cl.net.run_for(20);
  bridge.send(Envelope{reply("ghost-1", TopicKind::Result, "bridge-b", kCenterB)});
  cl.net.run_for(20);
  CHECK(cl.has("broker-b", "reply_dropped", "reason", "unknown_correlation"));
}

TEST_CASE("stop closes every session and empties the tables") {
  Cluster cl;
  Peer bridge(cl.net, "bridge-b");
  Peer client(cl.net, "c-7");
  bridge.connect_as("broker-b", "bridge-b", PeerRole::Bridge, kCenterB);
  bridge.subscribe("/sieve/call", Geofence::hexagon(kCenterB, 12.0));
  client.connect_as("broker-b", "c-7", PeerRole::Client, kCenterB);
  cl.net.run_for(20);
  REQUIRE_FALSE(cl.bb.subscriptions().empty());

  cl.bb.stop();
  cl.bp.stop();
  cl.bc.stop();
  cl.net.run_for(20);
  CHECK(cl.bb.subscriptions().empty());
  CHECK(bridge.closed);
  CHECK(client.closed);
  CHECK(cl.net.run_until_idle(60000));  // no timer keeps the queue alive
}
