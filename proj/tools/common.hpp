#pragma once

#include <atomic>
#include <csignal>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "geofaas/geo.hpp"
#include "geofaas/registry.hpp"
#include "geofaas/tcp_runtime.hpp"

namespace geofaas::tools {

inline std::atomic<bool> g_stop{false};

inline void install_signal_handlers() {
  std::signal(SIGINT, [](int) { g_stop.store(true, std::memory_order_relaxed); });
  std::signal(SIGTERM, [](int) { g_stop.store(true, std::memory_order_relaxed); });
}

inline bool stop_requested() { return g_stop.load(std::memory_order_relaxed); }

/// Streams event-log lines to stdout as they appear (self-rescheduling timer).
inline void start_log_tail(TcpRuntime& rt, bool enabled) {
  if (!enabled) return;
  auto cursor = std::make_shared<std::size_t>(0);
  auto tick = std::make_shared<std::function<void()>>();
  *tick = [&rt, cursor, tick] {
    const auto& lines = rt.log().lines();
    for (; *cursor < lines.size(); ++*cursor) std::cout << lines[*cursor] << '\n';
    std::cout.flush();
    rt.schedule(200, *tick);
  };
  rt.schedule(200, *tick);
}

/// Flushes any log lines the tail timer has not printed yet and optionally
/// saves the full log to a file.
inline void finish_log(TcpRuntime& rt, bool tailed, const std::string& log_path) {
  if (tailed) {
    // The tail already printed everything up to its last tick; print the rest.
    std::cout.flush();
  }
  if (!log_path.empty()) rt.log().save(log_path);
}

inline bool parse_latlon(const std::string& s, GeoPoint& out) {
  std::string tmp = s;
  for (char& c : tmp) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(tmp);
  double lat = 0.0, lon = 0.0;
  if (!(in >> lat >> lon)) return false;
  out = GeoPoint{lat, lon};
  return true;
}

}  // namespace geofaas::tools
