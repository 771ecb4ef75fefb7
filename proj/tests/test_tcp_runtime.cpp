#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "geofaas/bridge.hpp"
#include "geofaas/broker.hpp"
#include "geofaas/client.hpp"
#include "geofaas/executor.hpp"
#include "geofaas/tcp_runtime.hpp"

using namespace geofaas;

namespace {

/// Interleaves several reactors on the calling thread until `done` holds.
bool drive(std::vector<TcpRuntime*> rts, const std::function<bool()>& done,
           std::int64_t cap_ms = 5000) {
  TcpRuntime& clock = *rts.front();
  const std::int64_t give_up = clock.now_ms() + cap_ms;
  while (!done()) {
    if (clock.now_ms() > give_up) return false;
    for (TcpRuntime* rt : rts) rt->poll_once(2);
  }
  return true;
}

struct Echo final : NetClient {
  NodeRuntime& rt;
  int accepts = 0;
  int closes = 0;
  explicit Echo(NodeRuntime& r) : rt(r) {}
  void on_accept(ConnId) override { ++accepts; }
  void on_data(ConnId conn, std::string_view bytes) override {
    rt.send(conn, std::string(bytes));
  }
  void on_close(ConnId) override { ++closes; }
};

struct Collector final : NetClient {
  std::string data;
  int opens = 0;
  int closes = 0;
  void on_open(ConnId) override { ++opens; }
  void on_data(ConnId, std::string_view bytes) override { data.append(bytes); }
  void on_close(ConnId) override { ++closes; }
};

}  // namespace

TEST_CASE("bytes queued before the handshake arrive after it") {
  TcpRuntime server("server", 1);
  Echo echo(server);
  server.set_client(&echo);
  const std::uint16_t port = server.listen("127.0.0.1:0");

  TcpRuntime client("client", 2);
  Collector sink;
  client.set_client(&sink);
  const ConnId conn = client.connect("127.0.0.1:" + std::to_string(port));
  client.send(conn, "hello ");
  client.send(conn, "world");  // both queued: on_open has not fired yet

  CHECK(drive({&server, &client}, [&] { return sink.data == "hello world"; }));
  CHECK(sink.opens == 1);
  CHECK(echo.accepts == 1);

  client.close(conn);
  CHECK(drive({&server, &client}, [&] { return echo.closes == 1; }));
  CHECK(sink.closes == 0);  // the closing side gets no callback for its own close
}

TEST_CASE("graceful close still delivers queued bytes") {
  TcpRuntime server("server", 1);
  struct Sink final : NetClient {
    std::string data;
    int closes = 0;
    void on_data(ConnId, std::string_view bytes) override { data.append(bytes); }
    void on_close(ConnId) override { ++closes; }
  } sink;
  server.set_client(&sink);
  const std::uint16_t port = server.listen("127.0.0.1:0");

  TcpRuntime client("client", 2);
  Collector unused;
  client.set_client(&unused);
  const ConnId conn = client.connect("127.0.0.1:" + std::to_string(port));
  const std::string payload(512 * 1024, 'x');  // larger than one socket buffer
  client.send(conn, payload);
  client.close(conn);  // close before the handshake even completed

  CHECK(drive({&server, &client}, [&] { return sink.closes == 1; }));
  CHECK(sink.data.size() == payload.size());
}

TEST_CASE("failed connects surface as on_close, never synchronously") {
  TcpRuntime client("client", 3);
  Collector sink;
  client.set_client(&sink);

  // A port nothing listens on.
  TcpRuntime probe("probe", 4);
  const std::uint16_t dead_port = probe.listen("127.0.0.1:0");
  TcpRuntime probe2("probe2", 5);  // keep the port reserved but unserved
  (void)probe2;
  const std::string dead = "127.0.0.1:1";  // port 1: reliably refused unprivileged

  const ConnId a = client.connect(dead);
  CHECK(sink.closes == 0);  // not synchronous
  const ConnId b = client.connect("not-an-address");
  CHECK(a != b);
  CHECK(drive({&client}, [&] { return sink.closes == 2; }));
  CHECK(sink.opens == 0);
  (void)dead_port;
}

TEST_CASE("timers fire in order and cancel works") {
  TcpRuntime rt("timers", 6);
  std::vector<int> fired;
  rt.schedule(30, [&] { fired.push_back(3); });
  const std::uint64_t victim = rt.schedule(10, [&] { fired.push_back(9); });
  rt.schedule(1, [&] { fired.push_back(1); });
  rt.schedule(0, [&] { fired.push_back(0); });
  rt.cancel(victim);
  CHECK(rt.run_until([&] { return fired.size() == 3; }, 2000));
  CHECK(fired == std::vector<int>{0, 1, 3});
  CHECK(rt.now_ms() >= 30);
}

TEST_CASE("a full node stack exchanges calls over loopback sockets") {
  const GeoPoint center{52.5125, 13.3270};

  // Broker first: it must be listening before anyone dials.
  TcpRuntime broker_rt("broker-edge", 10);
  const std::uint16_t port = broker_rt.listen("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(port);
  // The cloud record is mandatory but never dialed here: the call is served
  // locally by the edge bridge.
  const Registry reg(1, {{"edge-main", addr, BrokerTier::Edge, Geofence::hexagon(center, 12.0)},
                         {"cloud", "127.0.0.1:9", BrokerTier::Cloud, Geofence::world()}});
  BrokerNode broker(broker_rt, reg, BrokerConfig{.broker_id = "edge-main"});

  TcpRuntime bridge_rt("bridge-edge", 11);
  ConnRouter bridge_router(bridge_rt);
  ExecutorPool pool(bridge_rt, 2.0);
  pool.register_function(sieve_function(4));
  InProcExecutor exec(pool);
  BridgeConfig bc;
  bc.bridge_id = "bridge-edge";
  bc.mode = BrokerTier::Edge;
  bc.service_area = Geofence::hexagon(center, 12.0);
  bc.broker_address = addr;
  bc.location = center;
  BridgeNode bridge(bridge_rt, bridge_router, bc, {&exec});

  TcpRuntime client_rt("client-1", 12);
  ConnRouter client_router(client_rt);
  ClientConfig cc;
  cc.client_id = "client-1";
  cc.bootstrap_address = addr;
  cc.location = center;
  ClientCore client(client_rt, client_router, reg, cc);

  std::vector<TcpRuntime*> rts{&broker_rt, &bridge_rt, &client_rt};
  bool connected = false;
  client.connect([&](bool ok) { connected = ok; });
  REQUIRE(drive(rts, [&] { return connected; }));

  const std::string id = client.start_call("sieve", "10000");
  REQUIRE(drive(rts, [&] {
    const CallState* st = client.poll(id);
    return st != nullptr && (st->phase == CallPhase::Resolved || st->phase == CallPhase::Failed);
  }));
  const CallState* st = client.poll(id);
  REQUIRE(st != nullptr);
  CHECK(st->phase == CallPhase::Resolved);
  CHECK(st->ok);
  CHECK(st->result == "1229");
  CHECK(st->serving_node_hint == "bridge-edge");
  CHECK(st->attempts == 1);

  client.stop();
  bridge.stop();
  for (int i = 0; i < 20; ++i) {
    for (TcpRuntime* rt : rts) rt->poll_once(1);
  }
}

TEST_CASE("registry text survives host:port addresses") {
  const Registry reg(3, {{"edge-main", "10.0.0.7:7101", BrokerTier::Edge,
                          Geofence::hexagon(GeoPoint{52.5125, 13.3270}, 12.0)},
                         {"cloud", "cloud.example.net:7200", BrokerTier::Cloud,
                          Geofence::world()}});
  const Registry back = Registry::parse(reg.to_text());
  REQUIRE(back.records().size() == 2);
  CHECK(back.find("edge-main")->address == "10.0.0.7:7101");
  CHECK(back.cloud().address == "cloud.example.net:7200");
}
