// Geo-aware pub/sub broker daemon: one process per registry record, listening
// on the record's address for client, bridge, and peer-broker connections.
#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "common.hpp"
#include "geofaas/broker.hpp"

int main(int argc, char** argv) {
  using namespace geofaas;

  CLI::App app{"geo-aware pub/sub broker"};
  std::string registry_path, broker_id, listen_override, log_path;
  std::int64_t heartbeat_timeout_ms = 2000;
  bool quiet = false;
  app.add_option("--registry", registry_path, "registry file (text format)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--id", broker_id, "this broker's id in the registry")->required();
  app.add_option("--heartbeat-timeout-ms", heartbeat_timeout_ms,
                 "bridge silence before it is suspected (twice this: dead)")
      ->check(CLI::PositiveNumber);
  app.add_option("--listen", listen_override,
                 "bind address (default: this id's registry address)");
  app.add_option("--log", log_path, "save the event log here on exit");
  app.add_flag("--quiet", quiet, "do not stream event-log lines to stdout");
  CLI11_PARSE(app, argc, argv);

  try {
    const Registry reg = Registry::load(registry_path);
    const BrokerRecord* rec = reg.find(broker_id);
    if (rec == nullptr) {
      std::cerr << "error: broker id '" << broker_id << "' is not in the registry\n";
      return 1;
    }
    const std::string listen_addr = listen_override.empty() ? rec->address : listen_override;

    TcpRuntime rt(broker_id);
    const std::uint16_t port = rt.listen(listen_addr);
    BrokerConfig cfg;
    cfg.broker_id = broker_id;
    cfg.heartbeat_timeout_ms = heartbeat_timeout_ms;
    BrokerNode broker(rt, reg, cfg);

    std::cout << "broker " << broker_id << " (" << to_string(rec->tier) << ") listening on "
              << listen_addr << " port " << port << '\n';
    tools::install_signal_handlers();
    tools::start_log_tail(rt, !quiet);
    rt.run_until([] { return tools::stop_requested(); });
    tools::finish_log(rt, !quiet, log_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
