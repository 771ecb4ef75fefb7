// Acceptance gate: seven end-to-end criteria, one PASS/FAIL line each.
// Exit code is 0 only when every criterion passes. All tolerances are pinned
// here as named constants.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "geofaas/bridge.hpp"
#include "geofaas/broker.hpp"
#include "geofaas/client.hpp"
#include "geofaas/executor.hpp"
#include "geofaas/geo.hpp"
#include "geofaas/harness.hpp"
#include "geofaas/registry.hpp"
#include "geofaas/simnet.hpp"
#include "geofaas/wire.hpp"

using namespace geofaas;

namespace {

// With default latencies (client-edge 1 ms, anything-cloud 25 ms) moving a
// request/reply pair from the edge to the cloud costs one extra round trip:
constexpr double kCloudEdgeDeltaMs = 2.0 * (25.0 - 1.0);  // = 48 ms
constexpr double kOutageDeltaTolerance = 0.20;            // +-20% band
constexpr std::int64_t kDistanceVirtualBudgetMs = 30000;
constexpr std::int64_t kDistanceWallBudgetMs = 120000;

const GeoPoint kTub{52.5125, 13.3270};

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& why) {
    if (!cond && ok) {
      ok = false;
      detail = why;
    }
  }
  void note(const std::string& d) {
    if (ok) detail = d;
  }
};

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.1f", v);
  return b;
}

// ---------------------------------------------------------------------------
// A small in-simulator deployment mirroring the harness wiring, with the
// broker objects kept accessible for introspection.
// ---------------------------------------------------------------------------

struct BridgeSpec {
  std::string bridge_id;
  std::string broker_id;
  BrokerTier mode;
  Geofence area;
  GeoPoint location;
  int capacity;
  double multiplier;
};

struct MiniWorld {
  SimNet net;
  Registry reg;
  std::map<std::string, std::unique_ptr<BrokerNode>> brokers;  // by broker id
  struct BridgeSite {
    NodeRuntime* rt = nullptr;
    std::unique_ptr<ConnRouter> router;
    std::unique_ptr<ExecutorPool> pool;
    std::unique_ptr<InProcExecutor> exec;
    std::unique_ptr<BridgeNode> bridge;
  };
  std::map<std::string, BridgeSite> bridges;  // by bridge id
  struct ClientSite {
    NodeRuntime* rt = nullptr;
    std::unique_ptr<ConnRouter> router;
    std::unique_ptr<ClientCore> core;
  };
  std::map<std::string, ClientSite> clients;

  MiniWorld(std::uint64_t seed, Registry r, const std::vector<BridgeSpec>& specs)
      : net(seed), reg(std::move(r)) {
    net.set_default_latency(1);
    const auto& recs = reg.records();
    for (const BrokerRecord& rec : recs) {
      brokers.emplace(rec.broker_id,
                      std::make_unique<BrokerNode>(net.add_host(rec.address), reg,
                                                   BrokerConfig{.broker_id = rec.broker_id}));
    }
    for (std::size_t i = 0; i < recs.size(); ++i) {
      for (std::size_t j = i + 1; j < recs.size(); ++j) {
        const bool cloudy =
            recs[i].tier == BrokerTier::Cloud || recs[j].tier == BrokerTier::Cloud;
        net.set_latency(recs[i].address, recs[j].address, cloudy ? 25 : 5);
      }
    }
    for (const BridgeSpec& s : specs) {
      BridgeSite site;
      site.rt = &net.add_host(s.bridge_id);
      site.router = std::make_unique<ConnRouter>(*site.rt);
      site.pool = std::make_unique<ExecutorPool>(*site.rt, s.multiplier);
      site.pool->register_function(sieve_function(s.capacity));
      site.exec = std::make_unique<InProcExecutor>(*site.pool);
      net.set_latency(s.bridge_id, reg.find(s.broker_id)->address, 0);
      BridgeConfig bc;
      bc.bridge_id = s.bridge_id;
      bc.mode = s.mode;
      bc.service_area = s.area;
      bc.broker_address = reg.find(s.broker_id)->address;
      bc.location = s.location;
      site.bridge = std::make_unique<BridgeNode>(*site.rt, *site.router, bc,
                                                 std::vector<ExecutorHandle*>{site.exec.get()});
      bridges.emplace(s.bridge_id, std::move(site));
    }
  }

  ClientCore& add_client(const std::string& name, GeoPoint at, ClientConfig cfg = {}) {
    ClientSite s;
    s.rt = &net.add_host(name);
    s.router = std::make_unique<ConnRouter>(*s.rt);
    cfg.client_id = name;
    cfg.location = at;
    if (cfg.bootstrap_address.empty()) cfg.bootstrap_address = reg.responsible_broker(at).address;
    net.set_latency(name, reg.cloud().address, 25);
    s.core = std::make_unique<ClientCore>(*s.rt, *s.router, reg, std::move(cfg));
    auto [it, unused] = clients.emplace(name, std::move(s));
    return *it->second.core;
  }

  bool pump(const std::function<bool()>& done, std::int64_t cap_ms) {
    while (!done()) {
      if (net.now_ms() > cap_ms) return false;
      if (!net.step()) return done();
    }
    return true;
  }

  bool connect(ClientCore& c, std::int64_t cap_ms = 10000) {
    bool finished = false, ok = false;
    c.connect([&](bool r) {
      finished = true;
      ok = r;
    });
    return pump([&] { return finished; }, net.now_ms() + cap_ms) && ok;
  }

  bool call_and_wait(ClientCore& c, const std::string& fn, const std::string& arg,
                     std::string* call_id_out = nullptr, std::int64_t cap_ms = 30000) {
    const std::string id = c.start_call(fn, arg);
    if (call_id_out != nullptr) *call_id_out = id;
    return pump(
        [&] {
          const CallState* st = c.poll(id);
          return st != nullptr &&
                 (st->phase == CallPhase::Resolved || st->phase == CallPhase::Failed);
        },
        net.now_ms() + cap_ms);
  }
};

std::vector<BridgeSpec> distance_bridges() {
  const GeoPoint south = destination(kTub, 210.0, std::sqrt(3.0) * 12.0);
  return {
      {"bridge-berlin", "edge-berlin", BrokerTier::Edge, Geofence::hexagon(kTub, 12.0), kTub, 4,
       2.0},
      {"bridge-potsdam", "edge-potsdam", BrokerTier::Edge, Geofence::hexagon(south, 12.0), south,
       4, 2.0},
      {"bridge-cloud", "cloud", BrokerTier::Cloud, Geofence::world(), GeoPoint{0.0, 0.0}, 64,
       1.0},
  };
}

std::vector<BridgeSpec> single_edge_bridges() {
  return {
      {"bridge-edge", "edge-main", BrokerTier::Edge, Geofence::hexagon(kTub, 12.0), kTub, 4, 2.0},
      {"bridge-cloud", "cloud", BrokerTier::Cloud, Geofence::world(), GeoPoint{0.0, 0.0}, 64,
       1.0},
  };
}

// --------------------------------------------------------------------------
// Criterion 1: the five-topic protocol with the stated subscriber roles.
// --------------------------------------------------------------------------
Check criterion_five_topics() {
  Check c;
  MiniWorld w(1, distance_registry(), distance_bridges());
  ClientCore& client = w.add_client("client-1", kTub);
  c.require(w.connect(client), "client failed to connect");
  w.net.run_for(100);  // let every subscription settle

  using Row = std::tuple<std::string, std::string, PeerRole, std::string>;
  std::set<Row> actual;
  std::map<std::string, std::string> call_fences;  // broker -> /sieve/call fence text
  for (const auto& [broker_id, broker] : w.brokers) {
    for (const SubscriptionInfo& sub : broker->subscriptions()) {
      actual.insert({broker_id, sub.subscriber_id, sub.role, sub.topic});
      if (sub.topic == "/sieve/call" && sub.role == PeerRole::Bridge) {
        call_fences[broker_id] = sub.geofence;
      }
    }
  }
  const std::set<Row> expected = {
      {"edge-berlin", "bridge-berlin", PeerRole::Bridge, "/sieve/call"},
      {"edge-potsdam", "bridge-potsdam", PeerRole::Bridge, "/sieve/call"},
      {"cloud", "bridge-cloud", PeerRole::Bridge, "/sieve/call"},
      {"cloud", "bridge-cloud", PeerRole::Bridge, "/sieve/nack"},
      {"cloud", "bridge-cloud", PeerRole::Bridge, "/sieve/call/retry"},
      {"edge-berlin", "client-1", PeerRole::Client, "/sieve/ack"},
      {"edge-berlin", "client-1", PeerRole::Client, "/sieve/result"},
  };
  c.require(actual == expected, "subscription table mismatch: " +
                                    std::to_string(actual.size()) + " rows vs expected " +
                                    std::to_string(expected.size()));

  // Exactly the five per-function topics exist across the deployment.
  std::set<std::string> topic_names;
  for (const Row& r : actual) topic_names.insert(std::get<3>(r));
  std::set<std::string> expected_topics;
  for (const Topic& t : topics_for_function("sieve")) expected_topics.insert(t.render());
  c.require(topic_names == expected_topics && topic_names.size() == 5,
            "deployment does not expose exactly the five per-function topics");

  // Edge call subscriptions carry the service-area geofence; cloud is world.
  c.require(call_fences["edge-berlin"] == Geofence::hexagon(kTub, 12.0).to_text(),
            "edge call subscription fence is not the service area");
  c.require(call_fences["cloud"] == Geofence::world().to_text(),
            "cloud call subscription fence is not world");
  c.note(std::to_string(actual.size()) + " subscription rows, 5 topics, fences exact");
  return c;
}

// --------------------------------------------------------------------------
// Criterion 2: distance scenario -- handoffs, latency gap, full resolution.
// --------------------------------------------------------------------------
Check criterion_distance() {
  Check c;
  const auto wall0 = std::chrono::steady_clock::now();
  ScenarioOptions opts;  // 99 waypoints, seed 1
  const RunMetrics m = run_distance(opts);
  const auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - wall0)
                           .count();

  c.require(m.handoffs == 2, "expected exactly 2 handoffs, saw " + std::to_string(m.handoffs));
  c.require(m.issued == 99 && m.failed == 0, "not every call resolved");
  double edge_sum = 0.0, cloud_sum = 0.0;
  int edge_n = 0, cloud_n = 0;
  for (const CallRecord& r : m.records) {
    c.require(r.resolved_ms >= 0 && r.ok, "call " + std::to_string(r.index) + " did not resolve");
    if (r.serving_node == "bridge-cloud") {
      cloud_sum += static_cast<double>(r.update_call_latency_ms);
      ++cloud_n;
    } else {
      edge_sum += static_cast<double>(r.update_call_latency_ms);
      ++edge_n;
    }
  }
  c.require(edge_n > 0 && cloud_n > 0, "both tiers must serve part of the trace");
  const double delta = cloud_sum / cloud_n - edge_sum / edge_n;
  c.require(delta >= kCloudEdgeDeltaMs,
            "cloud-edge latency gap " + fmt(delta) + " ms < " + fmt(kCloudEdgeDeltaMs));
  c.require(m.virtual_end_ms < kDistanceVirtualBudgetMs, "virtual time budget exceeded");
  c.require(wall_ms < kDistanceWallBudgetMs, "wall clock budget exceeded");
  c.note("2 handoffs, gap " + fmt(delta) + " ms, " + std::to_string(m.virtual_end_ms) +
         " ms virtual, " + std::to_string(wall_ms) + " ms wall");
  return c;
}

// --------------------------------------------------------------------------
// Criterion 3: high-load series -- offload thresholds and conservation.
// --------------------------------------------------------------------------
Check criterion_highload() {
  Check c;
  ScenarioOptions opts;  // seed 1, capacity 4, 10 calls per client
  const std::vector<RunMetrics> runs = run_highload_series(opts);
  c.require(runs.size() == 5, "series must cover 1,2,4,8,16 clients");
  std::string offloads;
  int prev = 0;
  for (const RunMetrics& m : runs) {
    c.require(m.normal + m.offload == 10 * m.group,
              "conservation violated at " + std::to_string(m.group) + " clients");
    c.require(m.failed == 0, "failures at " + std::to_string(m.group) + " clients");
    c.require(m.offload >= prev, "offload count decreased at " + std::to_string(m.group));
    prev = m.offload;
    offloads += (offloads.empty() ? "" : ",") + std::to_string(m.offload);
  }
  c.require(runs[0].offload == 0, "1 client must not offload");
  c.require(runs[1].offload == 0, "2 clients must not offload");
  c.require(runs[4].offload > 0, "16 clients must offload");
  c.note("offloads " + offloads + " for 1,2,4,8,16 clients");
  return c;
}

// --------------------------------------------------------------------------
// Criterion 4: outage scenario at full scale -- tier split and delta law.
// --------------------------------------------------------------------------
Check criterion_outage() {
  Check c;
  ScenarioOptions opts;  // 2000 calls, kill after 1000, retries on, seed 1
  const RunMetrics m = run_outage(opts);
  c.require(m.issued == 2000 && m.failed == 0, "exactly 2000 results must be delivered");

  double pre_sum = 0.0, post_sum = 0.0;
  int pre_n = 0, post_n = 0;
  for (const CallRecord& r : m.records) {
    c.require(r.resolved_ms >= 0 && r.ok, "unresolved call " + std::to_string(r.index));
    if (r.group == 0) {
      c.require(r.serving_node == "bridge-edge", "pre-kill call served off the edge");
      pre_sum += static_cast<double>(r.call_latency_ms);
      ++pre_n;
    } else {
      c.require(r.serving_node == "bridge-cloud", "post-kill call not served by the cloud");
      post_sum += static_cast<double>(r.call_latency_ms);
      ++post_n;
    }
  }
  c.require(pre_n == 1000 && post_n == 1000, "kill point split the run unevenly");

  // <= max_retries + 1 publishes per logical call, counted from the log.
  std::map<std::string, int> publishes;
  for (const auto& ev : EventLog::parse(m.events_text)) {
    if (ev.kind == "call_sent") publishes[ev.fields.at("corr")]++;
    if (ev.kind == "call_retry_sent") publishes[ev.fields.at("call")]++;
  }
  c.require(publishes.size() == 2000, "publish accounting lost calls");
  for (const auto& [corr, n] : publishes) {
    c.require(n <= 2, "call " + corr + " published " + std::to_string(n) + " times");
  }

  const double pre = pre_sum / pre_n, post = post_sum / post_n;
  const double delta = post - pre;
  const double lo = kCloudEdgeDeltaMs * (1.0 - kOutageDeltaTolerance);
  const double hi = kCloudEdgeDeltaMs * (1.0 + kOutageDeltaTolerance);
  c.require(delta >= lo && delta <= hi,
            "post-pre delta " + fmt(delta) + " ms outside [" + fmt(lo) + ", " + fmt(hi) + "]");
  c.note("pre " + fmt(pre) + " ms, post " + fmt(post) + " ms, delta " + fmt(delta) + " ms");
  return c;
}

// --------------------------------------------------------------------------
// Criterion 5: broker-side redirect after silent bridge death (no client
// retries involved).
// --------------------------------------------------------------------------
Check criterion_bridge_failure_redirect() {
  Check c;
  MiniWorld w(1, single_edge_registry(), single_edge_bridges());
  ClientConfig cfg;
  cfg.max_retries = 0;  // the redirect must come from the broker, not the client
  ClientCore& client = w.add_client("client-1", kTub, cfg);
  c.require(w.connect(client), "client failed to connect");

  std::string first_id;
  c.require(w.call_and_wait(client, "sieve", "10000", &first_id), "pre-kill call stalled");
  const CallState* first = client.poll(first_id);
  c.require(first != nullptr && first->ok && first->serving_node_hint == "bridge-edge",
            "pre-kill call was not served by the edge bridge");

  // Kill the bridge host outright: no disconnect, no goodbye. The broker's
  // liveness detector must notice the missing pings on its own.
  w.net.kill_host("bridge-edge");
  w.net.run_for(5500);  // > 2x heartbeat timeout + sweep period
  c.require(w.brokers.at("edge-main")->bridge_liveness("bridge-edge") == Liveness::Dead,
            "broker did not declare the silent bridge dead");

  std::string second_id;
  c.require(w.call_and_wait(client, "sieve", "10000", &second_id), "post-kill call stalled");
  const CallState* second = client.poll(second_id);
  c.require(second != nullptr && second->phase == CallPhase::Resolved && second->ok,
            "post-kill call did not resolve");
  c.require(second->serving_node_hint == "bridge-cloud", "post-kill call not served by cloud");
  c.require(second->attempts == 1, "client retried; the redirect must be broker-side");

  // The story must be visible in the event logs on the original broker.
  const std::string corr = second->correlation_id;
  bool saw_dead = false, saw_forward = false, saw_delivery = false, saw_client_retry = false;
  for (const auto& ev : EventLog::parse(w.net.log().to_text())) {
    if (ev.node == "broker-edge" && ev.kind == "bridge_dead" &&
        ev.fields.at("reason") == "silent") {
      saw_dead = true;
    }
    if (ev.node == "broker-edge" && ev.kind == "forward" && ev.fields.at("corr") == corr &&
        ev.fields.at("to") == "cloud") {
      saw_forward = true;
    }
    if (ev.node == "broker-edge" && ev.kind == "reply_deliver" && ev.fields.at("corr") == corr &&
        ev.fields.at("to") == "client-1" && ev.fields.at("topic") == "/sieve/result") {
      saw_delivery = true;
    }
    if (ev.kind == "call_retry_sent") saw_client_retry = true;
  }
  c.require(saw_dead, "log lacks bridge_dead reason=silent on the original broker");
  c.require(saw_forward, "log lacks the call's forward to the cloud broker");
  c.require(saw_delivery, "log lacks the result delivery through the original broker");
  c.require(!saw_client_retry, "a client retry happened; redirect must be transparent");
  const std::int64_t latency = second->resolved_ms - second->sent_ms;
  c.note("dead via missed pings, redirect latency " + std::to_string(latency) + " ms");
  return c;
}

// --------------------------------------------------------------------------
// Criterion 6: randomized property suites.
// --------------------------------------------------------------------------

bool geo_properties(std::string& why) {
  SimRng rng(1606);
  const auto rand_point = [&] {
    return GeoPoint{-85.0 + 170.0 * rng.unit(), -180.0 + 360.0 * rng.unit()};
  };
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint a = rand_point(), b = rand_point(), m = rand_point();
    const double dab = haversine_km(a, b);
    if (haversine_km(a, a) > 1e-9) { why = "d(a,a) != 0"; return false; }
    if (dab < 0.0) { why = "negative distance"; return false; }
    if (std::abs(dab - haversine_km(b, a)) > 1e-9) { why = "asymmetric distance"; return false; }
    if (dab > haversine_km(a, m) + haversine_km(m, b) + 1e-6) {
      why = "triangle inequality violated";
      return false;
    }
    const double r = 0.1 + 999.9 * rng.unit();
    const double bearing = 360.0 * rng.unit();
    if (std::abs(haversine_km(a, destination(a, bearing, r)) - r) > 1e-6 * r + 1e-9) {
      why = "destination does not land at its distance";
      return false;
    }
    // Containment: closed circle fence, inside/outside margins.
    const GeoPoint center{-60.0 + 120.0 * rng.unit(), -180.0 + 360.0 * rng.unit()};
    const double cr = 1.0 + 99.0 * rng.unit();
    const Geofence circle = Geofence::circle(center, cr);
    if (!circle.contains(destination(center, bearing, cr * 0.99))) {
      why = "point inside circle not contained";
      return false;
    }
    if (circle.contains(destination(center, bearing, cr * 1.01))) {
      why = "point outside circle contained";
      return false;
    }
    const Geofence hexagon = Geofence::hexagon(center, cr);
    if (!hexagon.contains(destination(center, bearing, cr * (std::sqrt(3.0) / 2.0) * 0.98))) {
      why = "point within hexagon inradius not contained";
      return false;
    }
    if (hexagon.contains(destination(center, bearing, cr * 1.02))) {
      why = "point beyond hexagon circumradius contained";
      return false;
    }
  }
  return true;
}

bool wire_roundtrips(std::string& why) {
  SimRng rng(1607);
  const auto rand_token = [&](std::size_t max_len) {
    static const char alphabet[] =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_./:";
    std::string s;
    const std::size_t n = rng.below(max_len + 1);
    for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.below(sizeof alphabet - 1)];
    return s;
  };
  // Topic function names are validated: non-empty, no '/'.
  const auto rand_name = [&](std::size_t max_len) {
    static const char alphabet[] =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_.";
    std::string s;
    const std::size_t n = 1 + rng.below(max_len);
    for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.below(sizeof alphabet - 1)];
    return s;
  };
  const auto rand_point = [&] {
    return normalized(GeoPoint{-85.0 + 170.0 * rng.unit(), -180.0 + 360.0 * rng.unit()});
  };
  for (int i = 0; i < 1000; ++i) {
    Envelope e;
    switch (rng.below(4)) {
      case 0: {
        Message m;
        m.msg_id = rand_token(24);
        m.correlation_id = rand_token(24);
        m.sender_id = rand_token(16);
        m.sender_location = rand_point();
        m.topic = Topic{rand_name(12), static_cast<TopicKind>(rng.below(5))};
        m.payload = rand_token(64);
        m.reply_broker = rand_token(8);
        e = m;
        break;
      }
      case 1: {
        // Control frames carry only the fields their kind defines; populate
        // exactly those so identity round-trips are meaningful.
        ControlMessage m;
        m.kind = static_cast<ControlKind>(rng.below(11));
        m.sender_id = rand_token(16);
        switch (m.kind) {
          case ControlKind::Connect:
            m.role = static_cast<PeerRole>(rng.below(3));
            m.location = rand_point();
            break;
          case ControlKind::LocationUpdate:
            m.location = rand_point();
            break;
          case ControlKind::ConnectAck:
          case ControlKind::Handoff:
            m.broker_id = rand_token(12);
            break;
          case ControlKind::Subscribe: {
            m.topic = rand_token(20);
            const auto pick = rng.below(3);
            m.geofence = pick == 0 ? Geofence::world()
                         : pick == 1
                             ? Geofence::circle(rand_point(), 1.0 + 50.0 * rng.unit())
                             : Geofence::hexagon(rand_point(), 1.0 + 50.0 * rng.unit());
            break;
          }
          case ControlKind::Unsubscribe:
            m.topic = rand_token(20);
            break;
          case ControlKind::NoSubscriber:
            m.correlation_id = rand_token(24);
            break;
          case ControlKind::Error:
            m.text = rand_token(40);
            break;
          case ControlKind::Ping:
          case ControlKind::Pong:
          case ControlKind::Disconnect:
            break;
        }
        e = m;
        break;
      }
      case 2: {
        e = ExecRequest{rand_token(24), rand_token(12), rand_token(64)};
        break;
      }
      default: {
        e = ExecResponse{rand_token(24), static_cast<InvokeStatus>(rng.below(4)),
                         rand_token(64)};
        break;
      }
    }
    const std::string bytes = encode(e);
    Envelope back;
    try {
      back = decode(bytes);
    } catch (const std::exception& ex) {
      why = std::string("decode threw: ") + ex.what();
      return false;
    }
    if (!(back == e)) {
      why = "decoded envelope differs from the original";
      return false;
    }
    if (encode(back) != bytes) {
      why = "re-encoding is not canonical";
      return false;
    }
  }
  return true;
}

bool sieve_matches_trial_division(std::string& why) {
  const FunctionSpec spec = sieve_function(1);
  int primes = 0;
  for (int n = 0; n <= 10000; ++n) {
    // primes counts p < n here; check n-1 for primality before comparing.
    if (n >= 2) {
      const int candidate = n - 1;
      bool prime = candidate >= 2;
      for (int d = 2; d * d <= candidate; ++d) {
        if (candidate % d == 0) {
          prime = false;
          break;
        }
      }
      if (prime) ++primes;
    }
    const std::string got = spec.handler(std::to_string(n));
    if (got != std::to_string(primes)) {
      why = "sieve(" + std::to_string(n) + ") = " + got + ", trial division says " +
            std::to_string(primes);
      return false;
    }
  }
  try {
    spec.handler("not-a-number");
    why = "malformed argument did not throw";
    return false;
  } catch (const std::exception&) {
  }
  return true;
}

bool registry_properties(std::string& why) {
  SimRng rng(1608);
  for (int t = 0; t < 200; ++t) {
    const GeoPoint base{-55.0 + 110.0 * rng.unit(), -180.0 + 360.0 * rng.unit()};
    const int k = 1 + static_cast<int>(rng.below(4));
    std::vector<BrokerRecord> records;
    // Centers on a ring, far enough apart that the areas cannot overlap.
    for (int i = 0; i < k; ++i) {
      const GeoPoint center = destination(base, 360.0 * i / k, 250.0);
      records.push_back({"edge-" + std::to_string(i), "b" + std::to_string(i), BrokerTier::Edge,
                         Geofence::circle(center, 10.0 + 70.0 * rng.unit())});
    }
    records.push_back({"cloud", "bc", BrokerTier::Cloud, Geofence::world()});
    const Registry reg(1, records);
    for (int p = 0; p < 50; ++p) {
      const GeoPoint probe = destination(base, 360.0 * rng.unit(), 400.0 * rng.unit());
      const BrokerRecord& got = reg.responsible_broker(probe);  // totality: never throws
      int containing = 0;
      std::string owner;
      for (const BrokerRecord& rec : records) {
        if (rec.tier == BrokerTier::Edge && rec.area.contains(probe)) {
          ++containing;
          owner = rec.broker_id;
        }
      }
      if (containing > 1) {
        why = "disjoint areas both contain a probe point";
        return false;
      }
      const std::string expect = containing == 1 ? owner : "cloud";
      if (got.broker_id != expect) {
        why = "responsible broker is " + got.broker_id + ", expected " + expect;
        return false;
      }
    }
  }
  return true;
}

bool offload_race_uniqueness(std::string& why) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    MiniWorld w(seed, single_edge_registry(),
                {{"bridge-edge", "edge-main", BrokerTier::Edge, Geofence::hexagon(kTub, 12.0),
                  kTub, 1, 2.0},  // capacity 1: every concurrent call races
                 {"bridge-cloud", "cloud", BrokerTier::Cloud, Geofence::world(),
                  GeoPoint{0.0, 0.0}, 64, 1.0}});
    w.net.run_for(10);
    ClientCore& a = w.add_client("client-a", kTub);
    ClientCore& b = w.add_client("client-b", kTub);
    if (!w.connect(a) || !w.connect(b)) {
      why = "clients failed to connect at seed " + std::to_string(seed);
      return false;
    }
    for (ClientCore* c : {&a, &b}) {
      NodeRuntime& rt = c == &a ? *w.clients.at("client-a").rt : *w.clients.at("client-b").rt;
      for (int j = 0; j < 2; ++j) {
        rt.schedule(static_cast<std::int64_t>(w.net.rng().below(30)),
                    [c] { c->start_call("sieve", "200000"); });
      }
    }
    const auto all_terminal = [&] {
      int terminal = 0;
      for (const ClientCore* c : {&a, &b}) {
        for (const auto& [id, st] : c->calls()) {
          if (st.phase == CallPhase::Resolved || st.phase == CallPhase::Failed) ++terminal;
        }
      }
      return terminal == 4;
    };
    if (!w.pump(all_terminal, w.net.now_ms() + 120000)) {
      why = "race run did not finish at seed " + std::to_string(seed);
      return false;
    }
    std::map<std::string, int> resolved;
    for (const auto& ev : EventLog::parse(w.net.log().to_text())) {
      if (ev.kind == "call_resolved") resolved[ev.fields.at("corr")]++;
    }
    int total = 0;
    for (const ClientCore* c : {&a, &b}) {
      for (const auto& [id, st] : c->calls()) {
        ++total;
        if (st.phase != CallPhase::Resolved || !st.ok) {
          why = "a raced call did not resolve ok at seed " + std::to_string(seed);
          return false;
        }
        const auto it = resolved.find(id);
        if (it == resolved.end() || it->second != 1) {
          why = "call " + id + " resolved " +
                std::to_string(it == resolved.end() ? 0 : it->second) + " times at seed " +
                std::to_string(seed);
          return false;
        }
      }
    }
    if (total != 4) {
      why = "expected 4 calls at seed " + std::to_string(seed);
      return false;
    }
  }
  return true;
}

Check criterion_property_suites() {
  Check c;
  std::string why;
  if (!geo_properties(why)) c.require(false, "geo: " + why);
  if (!wire_roundtrips(why)) c.require(false, "wire: " + why);
  if (!sieve_matches_trial_division(why)) c.require(false, "sieve: " + why);
  if (!registry_properties(why)) c.require(false, "registry: " + why);
  if (!offload_race_uniqueness(why)) c.require(false, "race: " + why);
  c.note("geo 1000, wire 1000, sieve 10001, registry 200x50, races 200 seeds");
  return c;
}

// --------------------------------------------------------------------------
// Criterion 7: byte-exact determinism of the seeded outage run.
// --------------------------------------------------------------------------
Check criterion_determinism() {
  Check c;
  ScenarioOptions opts;
  opts.seed = 7;
  const RunMetrics a = run_outage(opts);
  const RunMetrics b = run_outage(opts);
  const std::string csv_a = metrics_to_csv({a});
  const std::string csv_b = metrics_to_csv({b});
  c.require(csv_a == csv_b, "metrics.csv differs between identical seeded runs");
  c.require(a.events_text == b.events_text, "event logs differ between identical seeded runs");
  c.note(std::to_string(csv_a.size()) + " CSV bytes identical across two seed-7 runs");
  return c;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Check()> fn;
  };
  const std::vector<Entry> criteria = {
      {"five-topic protocol", criterion_five_topics},
      {"distance scenario", criterion_distance},
      {"high-load offloading", criterion_highload},
      {"edge-outage failover", criterion_outage},
      {"bridge-failure redirect", criterion_bridge_failure_redirect},
      {"property suites", criterion_property_suites},
      {"seeded determinism", criterion_determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      c = criteria[i].fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    std::cout << "criterion " << i + 1 << " (" << criteria[i].name
              << "): " << (c.ok ? "PASS" : "FAIL");
    if (!c.detail.empty()) std::cout << "  [" << c.detail << "]";
    std::cout << std::endl;
    if (!c.ok) ++failed;
  }
  std::cout << "acceptance: " << criteria.size() - failed << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
