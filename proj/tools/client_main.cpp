// Caller CLI: connects to the nearest broker, optionally walks a waypoint
// trace, and invokes a function at each stop, printing one line per call.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "geofaas/client.hpp"

namespace {

std::vector<geofaas::GeoPoint> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trace file " + path);
  std::vector<geofaas::GeoPoint> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double lat = 0.0, lon = 0.0;
    if (ls >> lat >> lon) out.push_back(geofaas::GeoPoint{lat, lon});
  }
  if (out.empty()) throw std::runtime_error("trace file has no waypoints: " + path);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace geofaas;

  CLI::App app{"function caller"};
  std::string registry_path, bootstrap, trace_path, function = "sieve", arg = "10000";
  std::string client_id = "client-1", location_str, log_path;
  std::int64_t think_ms = 50, ack_timeout_ms = 2000, result_timeout_ms = 10000;
  int max_retries = 1;
  bool events = false;
  app.add_option("--registry", registry_path, "registry file (text format)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--bootstrap", bootstrap,
                 "first broker to dial (default: the responsible broker for the start location)");
  app.add_option("--trace", trace_path, "waypoint file, one 'lat lon' per line")
      ->check(CLI::ExistingFile);
  app.add_option("--function", function, "function to call");
  app.add_option("--arg", arg, "payload passed to the function");
  app.add_option("--location", location_str, "start position lat,lon (default 52.5125,13.3270)");
  app.add_option("--think-ms", think_ms, "pause between trace calls")->check(CLI::NonNegativeNumber);
  app.add_option("--ack-timeout-ms", ack_timeout_ms, "")->check(CLI::PositiveNumber);
  app.add_option("--result-timeout-ms", result_timeout_ms, "")->check(CLI::PositiveNumber);
  app.add_option("--max-retries", max_retries, "extra attempts via the cloud retry topic")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--id", client_id, "client node id");
  app.add_option("--log", log_path, "save the event log here on exit");
  app.add_flag("--events", events, "stream event-log lines to stdout");
  CLI11_PARSE(app, argc, argv);
  const bool quiet = !events;

  try {
    const Registry reg = Registry::load(registry_path);
    std::vector<GeoPoint> trace;
    if (!trace_path.empty()) trace = load_trace(trace_path);

    GeoPoint start{52.5125, 13.3270};
    if (!location_str.empty() && !tools::parse_latlon(location_str, start)) {
      std::cerr << "error: --location expects lat,lon\n";
      return 1;
    }
    if (!trace.empty()) start = trace.front();

    ClientConfig cfg;
    cfg.client_id = client_id;
    cfg.bootstrap_address = bootstrap.empty() ? reg.responsible_broker(start).address : bootstrap;
    cfg.location = start;
    cfg.functions = {function};
    cfg.ack_timeout_ms = ack_timeout_ms;
    cfg.result_timeout_ms = result_timeout_ms;
    cfg.max_retries = max_retries;

    TcpRuntime rt(client_id);
    ConnRouter router(rt);
    ClientCore core(rt, router, reg, cfg);
    tools::install_signal_handlers();
    tools::start_log_tail(rt, !quiet);

    bool connected = false, connect_done = false;
    core.connect([&](bool ok) {
      connected = ok;
      connect_done = true;
    });
    rt.run_until([&] { return connect_done || tools::stop_requested(); }, 15000);
    if (!connected) {
      std::cerr << "error: could not connect to " << cfg.bootstrap_address << '\n';
      return 1;
    }
    std::cout << "connected to " << core.connected_broker() << '\n';

    // A run is one call per waypoint, or a single call when no trace is given.
    const std::size_t stops = trace.empty() ? 1 : trace.size();
    bool all_ok = true;
    for (std::size_t i = 0; i < stops && !tools::stop_requested(); ++i) {
      if (!trace.empty() && i > 0) {
        bool moved = false, move_done = false;
        core.update_location(trace[i], [&](bool ok) {
          moved = ok;
          move_done = true;
        });
        rt.run_until([&] { return move_done || tools::stop_requested(); }, 15000);
        if (!moved) {
          std::cerr << "error: location update " << i + 1 << " failed\n";
          return 1;
        }
      }
      const std::string id = core.start_call(function, arg);
      rt.run_until(
          [&] {
            const CallState* st = core.poll(id);
            return (st != nullptr && (st->phase == CallPhase::Resolved ||
                                      st->phase == CallPhase::Failed)) ||
                   tools::stop_requested();
          },
          ack_timeout_ms + result_timeout_ms + 10000);
      const CallState* st = core.poll(id);
      if (st == nullptr) break;
      std::cout << "call " << i + 1 << '/' << stops;
      if (!trace.empty()) {
        std::cout << " lat=" << trace[i].lat << " lon=" << trace[i].lon;
      }
      if (st->phase == CallPhase::Resolved) {
        std::cout << (st->ok ? " status=ok result=" : " status=error detail=") << st->result
                  << " latency_ms=" << st->resolved_ms - st->sent_ms
                  << " attempts=" << st->attempts << " by=" << st->serving_node_hint << '\n';
        all_ok = all_ok && st->ok;
      } else {
        std::cout << " status=failed reason=" << st->failure << " attempts=" << st->attempts
                  << '\n';
        all_ok = false;
      }
      if (think_ms > 0 && i + 1 < stops) {
        bool pause_over = false;
        rt.schedule(think_ms, [&] { pause_over = true; });
        rt.run_until([&] { return pause_over || tools::stop_requested(); }, think_ms + 1000);
      }
    }

    core.stop();
    rt.run_until([] { return false; }, 50);
    tools::finish_log(rt, !quiet, log_path);
    return all_ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
