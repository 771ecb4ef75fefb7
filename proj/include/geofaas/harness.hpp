#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geofaas/geo.hpp"
#include "geofaas/registry.hpp"

namespace geofaas {

/// Knobs for the built-in experiment scenarios. Unused fields are ignored by
/// scenarios they do not apply to.
struct ScenarioOptions {
  std::uint64_t seed = 1;

  // distance: a mobile client walks a straight line through two adjacent edge
  // areas and out the far side, updating its location before every call.
  int waypoints = 99;
  std::int64_t think_ms = 50;

  // highload: stationary clients fire calls at a fixed rate against one edge
  // whose executor capacity is deliberately small.
  int clients = 0;  // 0 = run the whole {1, 2, 4, 8, 16} series
  int calls_per_client = 10;
  std::int64_t call_interval_ms = 1000;
  int edge_capacity = 4;

  // outage: a sequential client keeps calling while the edge responder is
  // scripted to shut down partway through.
  int total_calls = 2000;
  int kill_after = 1000;
  bool client_retries = true;
};

/// One issued call, reconstructed from the event log after a run.
struct CallRecord {
  int group = 0;  // distance: waypoint; highload: client count; outage: 0 pre-kill, 1 post
  int index = 0;  // 1-based running number within the run
  std::string correlation_id;
  std::string client;
  std::string serving_node = "-";
  bool offloaded = false;  // served by the cloud although an edge area was responsible
  bool retried = false;
  bool ok = false;
  std::string failure = "-";
  std::int64_t issued_ms = 0;
  std::int64_t resolved_ms = -1;
  std::int64_t call_latency_ms = -1;         // publish -> result
  std::int64_t update_call_latency_ms = -1;  // location update -> result (equal when no update)
  double distance_km = 0.0;  // client to the nearest edge service-area center
};

struct RunMetrics {
  std::string scenario;
  std::uint64_t seed = 0;
  int group = 0;
  std::vector<CallRecord> records;
  int issued = 0;
  int normal = 0;   // resolved ok, not offloaded
  int offload = 0;  // resolved ok via the cloud while an edge was responsible
  int failed = 0;   // failed or resolved with an error payload
  int handoffs = 0;
  std::int64_t virtual_end_ms = 0;
  std::string events_text;    // full event log of the run
  std::string topology_text;  // registry text plus node/latency lines

  bool conservation_ok() const { return normal + offload + failed == issued; }
};

/// Fixed topologies used by the scenarios.
Registry distance_registry();
Registry single_edge_registry();

/// The straight-line mobility trace: starts inside the first edge area,
/// crosses into the second, and ends outside both. n >= 2.
std::vector<GeoPoint> distance_trace(int n = 99);

RunMetrics run_distance(const ScenarioOptions& opts);
RunMetrics run_highload(const ScenarioOptions& opts);  // opts.clients >= 1
std::vector<RunMetrics> run_highload_series(const ScenarioOptions& opts);
RunMetrics run_outage(const ScenarioOptions& opts);

/// CSV with one row per call across all given runs; byte-deterministic for
/// equal seeds and options.
std::string metrics_to_csv(const std::vector<RunMetrics>& runs);

/// Self-contained SVG charts. Empty input yields an empty string.
std::string render_distance_plot(const RunMetrics& run);
std::string render_highload_plot(const std::vector<RunMetrics>& runs);
std::string render_outage_plot(const RunMetrics& run);

/// Writes metrics.csv, events.log, topology.txt, and the scenario's plot SVG
/// into `out_dir` (created if missing). Returns the list of files written.
std::vector<std::string> write_outputs(const std::string& out_dir, const std::string& scenario,
                                       const std::vector<RunMetrics>& runs);

}  // namespace geofaas
