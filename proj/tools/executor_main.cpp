// Standalone FaaS executor daemon: serves function invocations to bridges over
// the executor wire protocol (length-framed request/response).
#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "common.hpp"
#include "geofaas/executor.hpp"

int main(int argc, char** argv) {
  using namespace geofaas;

  CLI::App app{"standalone function executor"};
  std::string listen_addr, log_path;
  double multiplier = 1.0;
  int capacity = 64;
  bool quiet = false;
  app.add_option("--listen", listen_addr, "bind address (host:port)")->required();
  app.add_option("--multiplier", multiplier, "compute cost multiplier")
      ->check(CLI::PositiveNumber);
  app.add_option("--capacity", capacity, "concurrent executions before overload")
      ->check(CLI::PositiveNumber);
  app.add_option("--log", log_path, "save the event log here on exit");
  app.add_flag("--quiet", quiet, "do not stream event-log lines to stdout");
  CLI11_PARSE(app, argc, argv);

  try {
    TcpRuntime rt("executor");
    ExecutorPool pool(rt, multiplier);
    pool.register_function(sieve_function(capacity));
    ExecutorServer server(rt, pool);
    const std::uint16_t port = rt.listen(listen_addr);
    std::cout << "executor listening on " << listen_addr << " port " << port << " (capacity "
              << capacity << ", multiplier " << multiplier << ")\n";
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
