#include "geofaas/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "geofaas/bridge.hpp"
#include "geofaas/broker.hpp"
#include "geofaas/client.hpp"
#include "geofaas/executor.hpp"
#include "geofaas/simnet.hpp"

namespace geofaas {

namespace {

const GeoPoint kNorthCenter{52.5125, 13.3270};
// Edge-sharing regular hexagons sit sqrt(3) * circumradius apart.
const double kAdjacentCentersKm = std::sqrt(3.0) * 12.0;
const GeoPoint kSouthCenter = destination(kNorthCenter, 210.0, kAdjacentCentersKm);

struct BridgePlan {
  std::string bridge_id;
  std::string broker_id;
  BrokerTier mode = BrokerTier::Edge;
  Geofence area = Geofence::world();
  GeoPoint location{};
  int capacity = 4;
  double multiplier = 1.0;
};

/// Boots a registry's brokers plus one bridge+executor per plan entry on a
/// fresh simulated network, wiring the standard latency profile: 1 ms default,
/// 5 ms between edge brokers, 25 ms to/from the cloud broker, 0 ms between a
/// bridge and its co-located broker.
struct Deployment {
  SimNet net;
  Registry reg;
  std::vector<BridgePlan> plans;
  std::vector<std::unique_ptr<BrokerNode>> brokers;
  struct BridgeSite {
    NodeRuntime* rt = nullptr;
    std::unique_ptr<ConnRouter> router;
    std::unique_ptr<ExecutorPool> pool;
    std::unique_ptr<InProcExecutor> exec;
    std::unique_ptr<BridgeNode> bridge;
  };
  std::vector<BridgeSite> sites;
  struct ClientSite {
    NodeRuntime* rt = nullptr;
    std::unique_ptr<ConnRouter> router;
    std::unique_ptr<ClientCore> core;
  };
  std::vector<ClientSite> clients;
  std::map<std::string, BrokerTier> node_tier;  // bridge id -> tier
  std::vector<GeoPoint> edge_centers;

  Deployment(std::uint64_t seed, Registry r, std::vector<BridgePlan> ps)
      : net(seed), reg(std::move(r)), plans(std::move(ps)) {
    net.set_default_latency(1);
    for (const BrokerRecord& rec : reg.records()) {
      NodeRuntime& rt = net.add_host(rec.address);
      brokers.push_back(
          std::make_unique<BrokerNode>(rt, reg, BrokerConfig{.broker_id = rec.broker_id}));
    }
    const auto& recs = reg.records();
    for (std::size_t i = 0; i < recs.size(); ++i) {
      for (std::size_t j = i + 1; j < recs.size(); ++j) {
        const bool cloudy =
            recs[i].tier == BrokerTier::Cloud || recs[j].tier == BrokerTier::Cloud;
        net.set_latency(recs[i].address, recs[j].address, cloudy ? 25 : 5);
      }
    }
    for (const BridgePlan& p : plans) {
      const BrokerRecord* home = reg.find(p.broker_id);
      if (home == nullptr) {
        throw std::invalid_argument("bridge plan names unknown broker: " + p.broker_id);
      }
      BridgeSite s;
      s.rt = &net.add_host(p.bridge_id);
      s.router = std::make_unique<ConnRouter>(*s.rt);
      s.pool = std::make_unique<ExecutorPool>(*s.rt, p.multiplier);
      s.pool->register_function(sieve_function(p.capacity));
      s.exec = std::make_unique<InProcExecutor>(*s.pool);
      net.set_latency(p.bridge_id, home->address, 0);
      BridgeConfig bc;
      bc.bridge_id = p.bridge_id;
      bc.mode = p.mode;
      bc.service_area = p.area;
      bc.broker_address = home->address;
      bc.location = p.location;
      s.bridge = std::make_unique<BridgeNode>(*s.rt, *s.router, bc,
                                              std::vector<ExecutorHandle*>{s.exec.get()});
      node_tier.emplace(p.bridge_id, p.mode);
      if (p.mode == BrokerTier::Edge) edge_centers.push_back(p.location);
      sites.push_back(std::move(s));
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
    clients.push_back(std::move(s));
    return *clients.back().core;
  }

  std::string topology_text() const {
    std::ostringstream o;
    o << reg.to_text();
    for (const BridgePlan& p : plans) {
      char mult[16];
      std::snprintf(mult, sizeof mult, "%.1f", p.multiplier);
      o << "node " << p.bridge_id << " broker=" << p.broker_id << " mode=" << to_string(p.mode)
        << " capacity=" << p.capacity << " multiplier=" << mult << " functions=sieve\n";
    }
    o << "latency default=1 edge_edge=5 cloud=25 bridge_local=0\n";
    return o.str();
  }
};

void pump_until(SimNet& net, std::int64_t cap_ms, const std::function<bool()>& done) {
  while (!done()) {
    if (net.now_ms() > cap_ms) {
      throw std::runtime_error("scenario exceeded its virtual-time budget");
    }
    if (!net.step()) break;
  }
  if (!done()) throw std::runtime_error("scenario stalled: event queue drained early");
}

void connect_ready(SimNet& net, ClientCore& c) {
  bool finished = false;
  bool ok = false;
  c.connect([&](bool r) {
    finished = true;
    ok = r;
  });
  pump_until(net, net.now_ms() + 10000, [&] { return finished; });
  if (!ok) throw std::runtime_error("client failed to connect");
}

struct RecordBuild {
  std::vector<CallRecord> records;
  int handoffs = 0;
};

/// Reconstructs per-call records from client-side event-log lines. Location
/// context (where each numbered call was issued from) comes from the scenario
/// plan; everything measured comes from the log.
RecordBuild build_records(
    const std::string& events_text, const std::vector<std::string>& client_nodes,
    const Registry& reg, const std::map<std::string, BrokerTier>& node_tier,
    const std::vector<GeoPoint>& edge_centers,
    const std::function<GeoPoint(const std::string&, int)>& call_location,
    const std::function<int(const std::string&, int)>& group_of) {
  const std::set<std::string> clients(client_nodes.begin(), client_nodes.end());
  std::map<std::string, CallRecord> by_corr;
  std::map<std::string, std::int64_t> update_ts;  // corr -> preceding location_sent
  std::map<std::string, GeoPoint> issued_at;      // corr -> client position
  std::map<std::string, std::int64_t> pending_update;
  std::map<std::string, int> nth;
  std::vector<std::string> order;
  RecordBuild out;

  for (const auto& ev : EventLog::parse(events_text)) {
    if (clients.find(ev.node) == clients.end()) continue;
    if (ev.kind == "location_sent") {
      pending_update[ev.node] = ev.ts_ms;
      continue;
    }
    if (ev.kind == "session_handoff") {
      ++out.handoffs;
      continue;
    }
    if (ev.kind == "call_sent") {
      CallRecord r;
      r.correlation_id = ev.fields.at("corr");
      r.client = ev.node;
      r.issued_ms = ev.ts_ms;
      const int k = ++nth[ev.node];
      r.group = group_of(ev.node, k);
      const GeoPoint at = call_location(ev.node, k);
      double nearest = 0.0;
      for (std::size_t i = 0; i < edge_centers.size(); ++i) {
        const double dist = haversine_km(at, edge_centers[i]);
        if (i == 0 || dist < nearest) nearest = dist;
      }
      r.distance_km = nearest;
      const auto pu = pending_update.find(ev.node);
      update_ts[r.correlation_id] = pu != pending_update.end() ? pu->second : ev.ts_ms;
      pending_update.erase(ev.node);
      issued_at[r.correlation_id] = at;
      order.push_back(r.correlation_id);
      by_corr.emplace(r.correlation_id, std::move(r));
      continue;
    }
    if (ev.kind == "call_retry_sent") {
      const auto it = by_corr.find(ev.fields.at("call"));
      if (it != by_corr.end()) it->second.retried = true;
      continue;
    }
    if (ev.kind == "call_resolved") {
      const auto it = by_corr.find(ev.fields.at("corr"));
      if (it == by_corr.end()) continue;
      CallRecord& r = it->second;
      r.resolved_ms = ev.ts_ms;
      r.serving_node = ev.fields.at("by");
      r.ok = ev.fields.at("status") == "ok";
      r.call_latency_ms = r.resolved_ms - r.issued_ms;
      r.update_call_latency_ms = r.resolved_ms - update_ts[r.correlation_id];
      const auto tier = node_tier.find(r.serving_node);
      const bool cloud_served = tier != node_tier.end() && tier->second == BrokerTier::Cloud;
      const bool edge_responsible =
          reg.responsible_broker(issued_at[r.correlation_id]).tier == BrokerTier::Edge;
      r.offloaded = cloud_served && edge_responsible;
      continue;
    }
    if (ev.kind == "call_failed") {
      const auto it = by_corr.find(ev.fields.at("corr"));
      if (it != by_corr.end()) it->second.failure = ev.fields.at("reason");
      continue;
    }
  }

  int idx = 0;
  out.records.reserve(order.size());
  for (const std::string& corr : order) {
    CallRecord r = by_corr.at(corr);
    r.index = ++idx;
    out.records.push_back(std::move(r));
  }
  return out;
}

void finalize(RunMetrics& m) {
  m.issued = static_cast<int>(m.records.size());
  m.normal = m.offload = m.failed = 0;
  for (const CallRecord& r : m.records) {
    if (r.resolved_ms >= 0 && r.ok) {
      (r.offloaded ? m.offload : m.normal)++;
    } else {
      ++m.failed;
    }
  }
}

std::vector<BridgePlan> single_edge_plans(int edge_capacity) {
  return {
      {"bridge-edge", "edge-main", BrokerTier::Edge, Geofence::hexagon(kNorthCenter, 12.0),
       kNorthCenter, edge_capacity, 2.0},
      {"bridge-cloud", "cloud", BrokerTier::Cloud, Geofence::world(), GeoPoint{0.0, 0.0}, 64, 1.0},
  };
}

}  // namespace

Registry distance_registry() {
  return Registry(
      1, {
             {"edge-berlin", "broker-berlin", BrokerTier::Edge, Geofence::hexagon(kNorthCenter, 12.0)},
             {"edge-potsdam", "broker-potsdam", BrokerTier::Edge, Geofence::hexagon(kSouthCenter, 12.0)},
             {"cloud", "broker-cloud", BrokerTier::Cloud, Geofence::world()},
         });
}

Registry single_edge_registry() {
  return Registry(1, {
                         {"edge-main", "broker-edge", BrokerTier::Edge, Geofence::hexagon(kNorthCenter, 12.0)},
                         {"cloud", "broker-cloud", BrokerTier::Cloud, Geofence::world()},
                     });
}

std::vector<GeoPoint> distance_trace(int n) {
  if (n < 2) throw std::invalid_argument("trace needs at least two waypoints");
  // Start 8 km north of the first area's center, head on a straight planar
  // line through the second center, and end 16 km beyond it: the path spends
  // its first stretch in area one, crosses into area two, then leaves both.
  const GeoPoint start = destination(kNorthCenter, 0.0, 8.0);
  const PlanarOffset sp = to_plane(kNorthCenter, start);
  const PlanarOffset pp = to_plane(kNorthCenter, kSouthCenter);
  const double dx = pp.x_km - sp.x_km;
  const double dy = pp.y_km - sp.y_km;
  const double len = std::hypot(dx, dy);
  const PlanarOffset ep{pp.x_km + 16.0 * dx / len, pp.y_km + 16.0 * dy / len};
  std::vector<GeoPoint> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    out.push_back(from_plane(kNorthCenter, PlanarOffset{sp.x_km + t * (ep.x_km - sp.x_km),
                                                        sp.y_km + t * (ep.y_km - sp.y_km)}));
  }
  return out;
}

RunMetrics run_distance(const ScenarioOptions& opts) {
  const std::vector<GeoPoint> trace = distance_trace(opts.waypoints);
  Deployment d(opts.seed, distance_registry(),
               {
                   {"bridge-berlin", "edge-berlin", BrokerTier::Edge,
                    Geofence::hexagon(kNorthCenter, 12.0), kNorthCenter, 4, 2.0},
                   {"bridge-potsdam", "edge-potsdam", BrokerTier::Edge,
                    Geofence::hexagon(kSouthCenter, 12.0), kSouthCenter, 4, 2.0},
                   {"bridge-cloud", "cloud", BrokerTier::Cloud, Geofence::world(),
                    GeoPoint{0.0, 0.0}, 64, 1.0},
               });
  d.net.run_for(10);
  ClientCore& c = d.add_client("client-1", trace.front());
  connect_ready(d.net, c);
  NodeRuntime& rt = *d.clients.back().rt;

  std::size_t next_wp = 0;
  bool done = false;
  std::function<void()> advance = [&] {
    if (next_wp == trace.size()) {
      done = true;
      return;
    }
    const GeoPoint p = trace[next_wp++];
    c.update_location(p, [&c, p](bool ok) {
      if (!ok) throw std::runtime_error("location update failed mid-trace");
      c.start_call("sieve", "10000");
    });
  };
  c.set_call_observer([&](const CallState&) { rt.schedule(opts.think_ms, advance); });
  advance();
  // ~110 ms worst case per waypoint (cloud update + call) plus think time; the
  // default 99-waypoint sweep must land well under 30 s of virtual time.
  const std::int64_t cap =
      std::max<std::int64_t>(30000, opts.waypoints * (opts.think_ms + 250) + 10000);
  pump_until(d.net, cap, [&] { return done; });

  RunMetrics m;
  m.scenario = "distance";
  m.seed = opts.seed;
  m.virtual_end_ms = d.net.now_ms();
  m.events_text = d.net.log().to_text();
  m.topology_text = d.topology_text();
  RecordBuild rb = build_records(
      m.events_text, {"client-1"}, d.reg, d.node_tier, d.edge_centers,
      [&trace](const std::string&, int k) { return trace[static_cast<std::size_t>(k) - 1]; },
      [](const std::string&, int k) { return k; });
  m.records = std::move(rb.records);
  m.handoffs = rb.handoffs;
  finalize(m);
  return m;
}

RunMetrics run_highload(const ScenarioOptions& opts) {
  if (opts.clients < 1) throw std::invalid_argument("highload needs clients >= 1");
  Deployment d(opts.seed, single_edge_registry(), single_edge_plans(opts.edge_capacity));
  d.net.run_for(10);

  std::vector<ClientCore*> cores;
  for (int i = 1; i <= opts.clients; ++i) {
    ClientConfig cfg;
    cfg.result_timeout_ms = 60000;  // fire-and-collect: never retry on slow results
    cores.push_back(&d.add_client("client-" + std::to_string(i), kNorthCenter, cfg));
  }
  for (ClientCore* c : cores) connect_ready(d.net, *c);

  for (std::size_t i = 0; i < cores.size(); ++i) {
    const std::int64_t offset = 10 + static_cast<std::int64_t>(d.net.rng().below(100));
    NodeRuntime& rt = *d.clients[i].rt;
    for (int j = 0; j < opts.calls_per_client; ++j) {
      rt.schedule(offset + j * opts.call_interval_ms,
                  [c = cores[i]] { c->start_call("sieve", "1000000"); });
    }
  }
  const std::size_t total =
      static_cast<std::size_t>(opts.clients) * static_cast<std::size_t>(opts.calls_per_client);
  const std::int64_t cap =
      20000 + static_cast<std::int64_t>(opts.calls_per_client) * opts.call_interval_ms + 60000;
  pump_until(d.net, cap, [&] {
    std::size_t issued = 0;
    for (ClientCore* c : cores) {
      if (!c->idle()) return false;
      issued += c->calls().size();
    }
    return issued == total;
  });

  RunMetrics m;
  m.scenario = "highload";
  m.seed = opts.seed;
  m.group = opts.clients;
  m.virtual_end_ms = d.net.now_ms();
  m.events_text = d.net.log().to_text();
  m.topology_text = d.topology_text();
  std::vector<std::string> names;
  for (int i = 1; i <= opts.clients; ++i) names.push_back("client-" + std::to_string(i));
  RecordBuild rb = build_records(
      m.events_text, names, d.reg, d.node_tier, d.edge_centers,
      [](const std::string&, int) { return kNorthCenter; },
      [&opts](const std::string&, int) { return opts.clients; });
  m.records = std::move(rb.records);
  m.handoffs = rb.handoffs;
  finalize(m);
  return m;
}

std::vector<RunMetrics> run_highload_series(const ScenarioOptions& opts) {
  std::vector<RunMetrics> out;
  for (int k : {1, 2, 4, 8, 16}) {
    ScenarioOptions o = opts;
    o.clients = k;
    out.push_back(run_highload(o));
  }
  return out;
}

RunMetrics run_outage(const ScenarioOptions& opts) {
  if (opts.kill_after < 1 || opts.kill_after >= opts.total_calls) {
    throw std::invalid_argument("outage needs 1 <= kill_after < total_calls");
  }
  Deployment d(opts.seed, single_edge_registry(), single_edge_plans(4));
  d.sites.front().bridge->shutdown_after(static_cast<std::size_t>(opts.kill_after));
  d.net.run_for(10);

  ClientConfig cfg;
  cfg.max_retries = opts.client_retries ? 1 : 0;
  ClientCore& c = d.add_client("client-1", kNorthCenter, cfg);
  connect_ready(d.net, c);
  NodeRuntime& rt = *d.clients.back().rt;

  int issued = 0;
  bool done = false;
  std::function<void()> next = [&] {
    if (issued == opts.total_calls) {
      done = true;
      return;
    }
    ++issued;
    c.start_call("sieve", "10000");
  };
  c.set_call_observer([&](const CallState&) { rt.schedule(0, next); });
  next();
  // Budget: ~8 ms per edge call, ~55 ms per cloud call, one ~2 s retry spike.
  pump_until(d.net, 20000 + static_cast<std::int64_t>(opts.total_calls) * 100,
             [&] { return done; });

  RunMetrics m;
  m.scenario = "outage";
  m.seed = opts.seed;
  m.virtual_end_ms = d.net.now_ms();
  m.events_text = d.net.log().to_text();
  m.topology_text = d.topology_text();
  RecordBuild rb = build_records(
      m.events_text, {"client-1"}, d.reg, d.node_tier, d.edge_centers,
      [](const std::string&, int) { return kNorthCenter; },
      [&opts](const std::string&, int k) { return k <= opts.kill_after ? 0 : 1; });
  m.records = std::move(rb.records);
  m.handoffs = rb.handoffs;
  finalize(m);
  return m;
}

std::string metrics_to_csv(const std::vector<RunMetrics>& runs) {
  std::ostringstream o;
  o << "scenario,seed,group,index,correlation_id,client,serving_node,offloaded,retried,ok,"
       "failure,issued_ms,resolved_ms,call_latency_ms,update_call_latency_ms,distance_km\n";
  char dist[32];
  for (const RunMetrics& run : runs) {
    for (const CallRecord& r : run.records) {
      std::snprintf(dist, sizeof dist, "%.3f", r.distance_km);
      o << run.scenario << ',' << run.seed << ',' << r.group << ',' << r.index << ','
        << r.correlation_id << ',' << r.client << ',' << r.serving_node << ','
        << (r.offloaded ? 1 : 0) << ',' << (r.retried ? 1 : 0) << ',' << (r.ok ? 1 : 0) << ','
        << r.failure << ',' << r.issued_ms << ',' << r.resolved_ms << ',' << r.call_latency_ms
        << ',' << r.update_call_latency_ms << ',' << dist << '\n';
    }
  }
  return o.str();
}

namespace {

/// Minimal deterministic SVG writer for the three report charts.
struct Svg {
  std::ostringstream o;
  int w, h;

  Svg(int w_, int h_, const std::string& title) : w(w_), h(h_) {
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << ' ' << h << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(w / 2.0, 24, title, 15, "#222", "middle");
  }

  static std::string num(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return b;
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double width = 1.0, const std::string& dash = "") {
    o << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\""
      << num(y2) << "\" stroke=\"" << color << "\" stroke-width=\"" << num(width) << '"';
    if (!dash.empty()) o << " stroke-dasharray=\"" << dash << '"';
    o << "/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                double width = 1.5, const std::string& dash = "") {
    if (pts.size() < 2) return;
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << num(width)
      << '"';
    if (!dash.empty()) o << " stroke-dasharray=\"" << dash << '"';
    o << " points=\"";
    for (const auto& [x, y] : pts) o << num(x) << ',' << num(y) << ' ';
    o << "\"/>\n";
  }

  void rect(double x, double y, double rw, double rh, const std::string& fill) {
    o << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(rw)
      << "\" height=\"" << num(rh) << "\" fill=\"" << fill << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& color = "#333", const std::string& anchor = "start") {
    o << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
      << "\" fill=\"" << color << "\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  }

  std::string finish() {
    o << "</svg>\n";
    return o.str();
  }
};

struct Scale {
  double d0, d1, p0, p1;
  double operator()(double v) const { return p0 + (v - d0) / (d1 - d0) * (p1 - p0); }
};

constexpr int kW = 960, kH = 460, kMl = 70, kMr = 80, kMt = 44, kMb = 48;

void frame_and_y_ticks(Svg& s, const Scale& y, double ymax, const std::string& unit) {
  s.line(kMl, kH - kMb, kW - kMr, kH - kMb, "#444");
  s.line(kMl, kMt, kMl, kH - kMb, "#444");
  for (int i = 0; i <= 4; ++i) {
    const double v = ymax * i / 4.0;
    s.line(kMl, y(v), kW - kMr, y(v), "#eee");
    s.text(kMl - 6, y(v) + 4, Svg::num(v), 10, "#555", "end");
  }
  s.text(16, kMt - 10, unit, 11, "#555");
}

}  // namespace

std::string render_distance_plot(const RunMetrics& run) {
  if (run.records.empty()) return {};
  const auto& rs = run.records;
  double ymax = 1.0, dmax = 1.0;
  for (const CallRecord& r : rs) {
    ymax = std::max(ymax, static_cast<double>(r.update_call_latency_ms));
    dmax = std::max(dmax, r.distance_km);
  }
  ymax *= 1.08;
  dmax *= 1.08;
  Svg s(kW, kH, "Per-waypoint latency for a moving client");
  const Scale x{1.0, static_cast<double>(rs.size()), kMl, kW - kMr};
  const Scale y{0.0, ymax, kH - kMb, kMt};
  const Scale yd{0.0, dmax, kH - kMb, kMt};
  frame_and_y_ticks(s, y, ymax, "latency ms");
  s.text(kW - kMr + 6, kMt - 10, "km to nearest edge", 11, "#888");
  for (int i = 0; i <= 4; ++i) {
    const double v = dmax * i / 4.0;
    s.text(kW - kMr + 6, yd(v) + 4, Svg::num(v), 10, "#888");
  }
  s.text((kMl + kW - kMr) / 2.0, kH - 14, "waypoint", 11, "#555", "middle");

  std::vector<std::pair<double, double>> upd, call, dist;
  for (const CallRecord& r : rs) {
    const double px = x(r.index);
    if (r.resolved_ms >= 0) {
      upd.emplace_back(px, y(static_cast<double>(r.update_call_latency_ms)));
      call.emplace_back(px, y(static_cast<double>(r.call_latency_ms)));
    }
    dist.emplace_back(px, yd(r.distance_km));
  }
  // Vertical markers where the serving node changes (session handoffs).
  for (std::size_t i = 1; i < rs.size(); ++i) {
    if (rs[i].serving_node != rs[i - 1].serving_node) {
      const double px = x(rs[i].index);
      s.line(px, kMt, px, kH - kMb, "#d62728", 1.0, "5,4");
      s.text(px + 3, kMt + 14, "handoff", 10, "#d62728");
    }
  }
  s.polyline(dist, "#999", 1.0, "2,3");
  s.polyline(upd, "#1f77b4", 1.6);
  s.polyline(call, "#ff7f0e", 1.2);
  s.rect(kMl + 8, kH - kMb - 58, 10, 3, "#1f77b4");
  s.text(kMl + 24, kH - kMb - 53, "update + call", 11);
  s.rect(kMl + 8, kH - kMb - 42, 10, 3, "#ff7f0e");
  s.text(kMl + 24, kH - kMb - 37, "call only", 11);
  s.rect(kMl + 8, kH - kMb - 26, 10, 3, "#999");
  s.text(kMl + 24, kH - kMb - 21, "distance", 11);
  return s.finish();
}

std::string render_highload_plot(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) return {};
  double ymax = 1.0;
  for (const RunMetrics& r : runs) ymax = std::max(ymax, static_cast<double>(r.issued));
  ymax *= 1.15;
  Svg s(kW, kH, "Edge (normal) vs cloud (offload) responses by client count");
  const Scale y{0.0, ymax, kH - kMb, kMt};
  frame_and_y_ticks(s, y, ymax, "calls");
  const double span = static_cast<double>(kW - kMl - kMr);
  const double slot = span / static_cast<double>(runs.size());
  const double bar = std::min(64.0, slot * 0.5);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunMetrics& r = runs[i];
    const double cx = kMl + slot * (static_cast<double>(i) + 0.5);
    const double x0 = cx - bar / 2.0;
    const double y_norm = y(r.normal);
    const double y_off = y(r.normal + r.offload);
    s.rect(x0, y_norm, bar, (kH - kMb) - y_norm, "#1f77b4");
    s.rect(x0, y_off, bar, y_norm - y_off, "#d62728");
    s.text(cx, kH - kMb + 16, std::to_string(r.group), 11, "#333", "middle");
    s.text(cx, y_off - 6, std::to_string(r.normal) + "+" + std::to_string(r.offload), 10, "#333",
           "middle");
  }
  s.text((kMl + kW - kMr) / 2.0, kH - 14, "parallel clients", 11, "#555", "middle");
  s.rect(kMl + 8, kMt + 8, 10, 10, "#1f77b4");
  s.text(kMl + 24, kMt + 17, "normal (edge)", 11);
  s.rect(kMl + 8, kMt + 26, 10, 10, "#d62728");
  s.text(kMl + 24, kMt + 35, "offload (cloud)", 11);
  return s.finish();
}

std::string render_outage_plot(const RunMetrics& run) {
  if (run.records.empty()) return {};
  // Trailing one-second moving average over resolved calls, colored by the
  // tier that served each call (edge vs cloud).
  struct Pt {
    double t_s;
    double avg_ms;
    bool cloud;
  };
  std::vector<Pt> pts;
  std::vector<const CallRecord*> resolved;
  for (const CallRecord& r : run.records) {
    if (r.resolved_ms >= 0) resolved.push_back(&r);
  }
  if (resolved.empty()) return {};
  std::sort(resolved.begin(), resolved.end(),
            [](const CallRecord* a, const CallRecord* b) { return a->resolved_ms < b->resolved_ms; });
  std::size_t lo = 0;
  double window_sum = 0.0;
  std::size_t window_n = 0;
  for (std::size_t i = 0; i < resolved.size(); ++i) {
    window_sum += static_cast<double>(resolved[i]->call_latency_ms);
    ++window_n;
    while (resolved[lo]->resolved_ms < resolved[i]->resolved_ms - 1000) {
      window_sum -= static_cast<double>(resolved[lo]->call_latency_ms);
      --window_n;
      ++lo;
    }
    pts.push_back({static_cast<double>(resolved[i]->resolved_ms) / 1000.0,
                   window_sum / static_cast<double>(window_n),
                   resolved[i]->serving_node == "bridge-cloud"});
  }
  double tmax = 1.0, vmax = 10.0;
  for (const Pt& p : pts) {
    tmax = std::max(tmax, p.t_s);
    vmax = std::max(vmax, p.avg_ms);
  }
  Svg s(kW, kH, "One-second moving average latency across an edge outage");
  const Scale x{0.0, tmax * 1.02, kMl, kW - kMr};
  const double lmax = std::log10(vmax * 1.3);
  const Scale y{0.0, lmax, kH - kMb, kMt};
  s.line(kMl, kH - kMb, kW - kMr, kH - kMb, "#444");
  s.line(kMl, kMt, kMl, kH - kMb, "#444");
  for (double tick = 1.0; tick <= vmax * 1.3; tick *= 10.0) {
    const double py = y(std::log10(tick));
    s.line(kMl, py, kW - kMr, py, "#eee");
    s.text(kMl - 6, py + 4, Svg::num(tick), 10, "#555", "end");
  }
  s.text(16, kMt - 10, "latency ms (log)", 11, "#555");
  s.text((kMl + kW - kMr) / 2.0, kH - 14, "virtual time s", 11, "#555", "middle");

  auto ylog = [&](double v) { return y(std::log10(std::max(1.0, v))); };
  std::vector<std::pair<double, double>> seg;
  bool seg_cloud = pts.front().cloud;
  auto flush = [&] {
    s.polyline(seg, seg_cloud ? "#d62728" : "#1f77b4", 1.6);
    seg.clear();
  };
  for (const Pt& p : pts) {
    if (p.cloud != seg_cloud && !seg.empty()) {
      flush();
      seg_cloud = p.cloud;
    }
    seg.emplace_back(x(p.t_s), ylog(p.avg_ms));
  }
  flush();
  s.rect(kMl + 8, kMt + 8, 10, 3, "#1f77b4");
  s.text(kMl + 24, kMt + 13, "served by edge", 11);
  s.rect(kMl + 8, kMt + 24, 10, 3, "#d62728");
  s.text(kMl + 24, kMt + 29, "served by cloud", 11);
  return s.finish();
}

std::vector<std::string> write_outputs(const std::string& out_dir, const std::string& scenario,
                                       const std::vector<RunMetrics>& runs) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  const auto put = [&](const std::string& name, const std::string& body) {
    const std::string path = (fs::path(out_dir) / name).string();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << body;
    written.push_back(path);
  };
  put("metrics.csv", metrics_to_csv(runs));
  std::string events;
  for (const RunMetrics& r : runs) events += r.events_text;
  put("events.log", events);
  if (!runs.empty()) put("topology.txt", runs.front().topology_text);

  std::string plot;
  if (scenario == "distance" && !runs.empty()) {
    plot = render_distance_plot(runs.front());
  } else if (scenario == "highload") {
    plot = render_highload_plot(runs);
  } else if (scenario == "outage" && !runs.empty()) {
    plot = render_outage_plot(runs.front());
  }
  if (plot.empty()) {
    std::cerr << "warning: no records to plot for scenario '" << scenario << "'\n";
  } else {
    put("plot_" + scenario + ".svg", plot);
  }
  return written;
}

}  // namespace geofaas
