// Experiment harness CLI: runs the three canned scenarios on the deterministic
// simulated network and writes metrics, logs, topology, and plots.
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "geofaas/harness.hpp"

namespace {

void print_summary(const geofaas::RunMetrics& m) {
  std::cout << m.scenario << " seed=" << m.seed << " group=" << m.group
            << " issued=" << m.issued << " normal=" << m.normal << " offload=" << m.offload
            << " failed=" << m.failed << " handoffs=" << m.handoffs
            << " virtual_end_ms=" << m.virtual_end_ms
            << (m.conservation_ok() ? "" : "  [conservation violated]") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  using namespace geofaas;

  CLI::App app{"scenario harness (simulated network)"};
  app.require_subcommand(1);

  // --- harness run <scenario> ---
  CLI::App* run = app.add_subcommand("run", "run a scenario and write its report files");
  std::string scenario, out_dir;
  ScenarioOptions opts;
  int clients = 0;
  run->add_option("scenario", scenario, "distance | highload | outage")
      ->required()
      ->check(CLI::IsMember({"distance", "highload", "outage"}));
  run->add_option("--seed", opts.seed, "simulation seed (default 1)");
  run->add_option("--clients", clients,
                  "highload: parallel clients (default: the full 1,2,4,8,16 series)")
      ->check(CLI::PositiveNumber);
  run->add_option("--total", opts.total_calls, "outage: total calls")->check(CLI::PositiveNumber);
  run->add_option("--kill-after", opts.kill_after,
                  "outage: edge results before its scripted shutdown")
      ->check(CLI::PositiveNumber);
  run->add_option("--waypoints", opts.waypoints, "distance: trace length")
      ->check(CLI::PositiveNumber);
  run->add_option("--think-ms", opts.think_ms, "distance: pause between calls")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--calls", opts.calls_per_client, "highload: calls per client")
      ->check(CLI::PositiveNumber);
  run->add_option("--interval-ms", opts.call_interval_ms, "highload: gap between a client's calls")
      ->check(CLI::PositiveNumber);
  run->add_option("--capacity", opts.edge_capacity, "highload: edge concurrent executions")
      ->check(CLI::PositiveNumber);
  bool no_client_retries = false;
  run->add_flag("--no-client-retries", no_client_retries,
                "outage: clients give up instead of retrying via the cloud topic");
  run->add_option("--out", out_dir, "output directory (default ./runs/<scenario>)");

  // --- harness trace ---
  CLI::App* trace_cmd = app.add_subcommand("trace", "write the mobility waypoint file");
  std::string trace_out = "trace.txt";
  int trace_n = 99;
  trace_cmd->add_option("--waypoints", trace_n, "number of waypoints")->check(CLI::PositiveNumber);
  trace_cmd->add_option("--out", trace_out, "output file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (trace_cmd->parsed()) {
      std::ofstream f(trace_out, std::ios::trunc);
      if (!f) throw std::runtime_error("cannot write " + trace_out);
      char buf[64];
      for (const GeoPoint& p : distance_trace(trace_n)) {
        std::snprintf(buf, sizeof buf, "%.12f %.12f\n", p.lat, p.lon);
        f << buf;
      }
      std::cout << "wrote " << trace_n << " waypoints to " << trace_out << '\n';
      return 0;
    }

    opts.client_retries = !no_client_retries;
    std::vector<RunMetrics> runs;
    if (scenario == "distance") {
      runs.push_back(run_distance(opts));
    } else if (scenario == "highload") {
      if (clients > 0) {
        opts.clients = clients;
        runs.push_back(run_highload(opts));
      } else {
        runs = run_highload_series(opts);
      }
    } else {
      runs.push_back(run_outage(opts));
    }

    for (const RunMetrics& m : runs) print_summary(m);
    if (out_dir.empty()) out_dir = "runs/" + scenario;
    for (const std::string& f : write_outputs(out_dir, scenario, runs)) {
      std::cout << "wrote " << f << '\n';
    }
    for (const RunMetrics& m : runs) {
      if (!m.conservation_ok()) return 2;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
