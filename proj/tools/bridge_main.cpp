// Function-call gateway daemon: subscribes to call topics on its broker and
// dispatches invocations to in-process or remote executors, offloading to the
// cloud tier when local capacity is exhausted.
#include <CLI11.hpp>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "common.hpp"
#include "geofaas/bridge.hpp"
#include "geofaas/executor.hpp"

int main(int argc, char** argv) {
  using namespace geofaas;

  CLI::App app{"edge/cloud function-call gateway"};
  std::string mode, registry_path, broker_addr, bridge_id, location_str, log_path;
  std::vector<std::string> executor_specs{"inproc"};
  std::int64_t offload_deadline_ms = 10000;
  double multiplier = -1.0;
  int capacity = -1;
  bool quiet = false;
  app.add_option("--mode", mode, "edge or cloud")
      ->required()
      ->check(CLI::IsMember({"edge", "cloud"}));
  app.add_option("--registry", registry_path, "registry file (text format)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--broker", broker_addr, "home broker address (host:port)")->required();
  app.add_option("--executor", executor_specs,
                 "executor endpoints tried in order: 'inproc' or host:port (repeatable)");
  app.add_option("--offload-deadline-ms", offload_deadline_ms,
                 "per-executor attempt deadline")
      ->check(CLI::PositiveNumber);
  app.add_option("--id", bridge_id, "node id (default bridge-<mode>)");
  app.add_option("--location", location_str, "lat,lon stamped on published messages");
  app.add_option("--multiplier", multiplier,
                 "in-proc compute cost multiplier (default: edge 2.0, cloud 1.0)");
  app.add_option("--capacity", capacity,
                 "in-proc concurrent executions (default: edge 4, cloud 64)");
  app.add_option("--log", log_path, "save the event log here on exit");
  app.add_flag("--quiet", quiet, "do not stream event-log lines to stdout");
  CLI11_PARSE(app, argc, argv);

  try {
    const bool edge = mode == "edge";
    if (bridge_id.empty()) bridge_id = "bridge-" + mode;
    if (multiplier <= 0.0) multiplier = edge ? 2.0 : 1.0;
    if (capacity <= 0) capacity = edge ? 4 : 64;

    const Registry reg = Registry::load(registry_path);
    // An edge bridge serves exactly its home broker's area; match by address.
    Geofence area = Geofence::world();
    if (edge) {
      const BrokerRecord* home = nullptr;
      for (const BrokerRecord& rec : reg.records()) {
        if (rec.address == broker_addr) home = &rec;
      }
      if (home == nullptr) {
        std::cerr << "error: no registry record has address '" << broker_addr
                  << "' (needed to derive the edge service area)\n";
        return 1;
      }
      area = home->area;
    }
    GeoPoint location{};
    if (!location_str.empty() && !tools::parse_latlon(location_str, location)) {
      std::cerr << "error: --location expects lat,lon\n";
      return 1;
    }

    TcpRuntime rt(bridge_id);
    ConnRouter router(rt);
    ExecutorPool pool(rt, multiplier);
    pool.register_function(sieve_function(capacity));
    InProcExecutor inproc(pool);
    std::vector<std::unique_ptr<RemoteExecutor>> remotes;
    std::vector<ExecutorHandle*> handles;
    for (const std::string& spec : executor_specs) {
      if (spec == "inproc") {
        handles.push_back(&inproc);
      } else {
        remotes.push_back(std::make_unique<RemoteExecutor>(rt, router, spec));
        handles.push_back(remotes.back().get());
      }
    }

    BridgeConfig cfg;
    cfg.bridge_id = bridge_id;
    cfg.mode = edge ? BrokerTier::Edge : BrokerTier::Cloud;
    cfg.service_area = area;
    cfg.offload_deadline_ms = offload_deadline_ms;
    cfg.broker_address = broker_addr;
    cfg.location = location;
    BridgeNode bridge(rt, router, cfg, handles);

    std::cout << "bridge " << bridge_id << " (" << mode << ") -> broker " << broker_addr
              << ", executors:";
    for (const ExecutorHandle* h : handles) std::cout << ' ' << h->describe();
    std::cout << '\n';

    tools::install_signal_handlers();
    tools::start_log_tail(rt, !quiet);
    rt.run_until([] { return tools::stop_requested(); });
    bridge.stop();  // polite disconnect so the broker marks this node dead now
    rt.run_until([] { return false; }, 50);
    tools::finish_log(rt, !quiet, log_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
