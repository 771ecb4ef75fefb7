#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "geofaas/geo.hpp"
#include "geofaas/harness.hpp"
#include "geofaas/registry.hpp"
#include "geofaas/wire.hpp"

namespace py = pybind11;
using namespace geofaas;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Geo-aware FaaS platform core: geometry, registry, scenario harness";

  py::class_<GeoPoint>(m, "GeoPoint")
      .def(py::init<>())
      .def(py::init([](double lat, double lon) { return GeoPoint{lat, lon}; }), py::arg("lat"),
           py::arg("lon"))
      .def_readwrite("lat", &GeoPoint::lat)
      .def_readwrite("lon", &GeoPoint::lon)
      .def("__eq__", [](const GeoPoint& a, const GeoPoint& b) { return a == b; })
      .def("__repr__", [](const GeoPoint& p) {
        return "GeoPoint(lat=" + std::to_string(p.lat) + ", lon=" + std::to_string(p.lon) + ")";
      });

  m.def("haversine_km", &haversine_km, py::arg("a"), py::arg("b"),
        "Great-circle distance in km (mean earth radius 6371 km)");
  m.def("destination", &destination, py::arg("origin"), py::arg("bearing_deg"),
        py::arg("distance_km"), "Point reached along an initial bearing");
  m.def("normalized", &normalized, py::arg("p"));

  py::class_<Geofence> fence(m, "Geofence");
  fence.def_static("world", &Geofence::world)
      .def_static("circle", &Geofence::circle, py::arg("center"), py::arg("radius_km"))
      .def_static("hexagon", &Geofence::hexagon, py::arg("center"), py::arg("circumradius_km"))
      .def_static("polygon", &Geofence::polygon, py::arg("vertices"))
      .def_static("parse", [](const std::string& s) { return Geofence::parse(s); }, py::arg("text"))
      .def("contains", &Geofence::contains, py::arg("p"))
      .def("to_text", &Geofence::to_text)
      .def("__eq__", [](const Geofence& a, const Geofence& b) { return a == b; })
      .def("__repr__", [](const Geofence& f) { return "Geofence('" + f.to_text() + "')"; });

  m.def("fences_disjoint", &fences_disjoint, py::arg("a"), py::arg("b"), py::arg("grid_km") = 0.5);

  m.def("topics_for_function", [](const std::string& f) {
    std::vector<std::string> out;
    for (const auto& t : topics_for_function(f)) out.push_back(t.render());
    return out;
  });

  // --- broker registry ---
  py::enum_<BrokerTier>(m, "BrokerTier")
      .value("Edge", BrokerTier::Edge)
      .value("Cloud", BrokerTier::Cloud);

  py::class_<BrokerRecord>(m, "BrokerRecord")
      .def_readonly("broker_id", &BrokerRecord::broker_id)
      .def_readonly("address", &BrokerRecord::address)
      .def_readonly("tier", &BrokerRecord::tier)
      .def_readonly("area", &BrokerRecord::area)
      .def("__repr__", [](const BrokerRecord& r) {
        return "BrokerRecord(" + r.broker_id + " @ " + r.address + ")";
      });

  py::class_<Registry>(m, "Registry")
      .def_static("parse", [](const std::string& s) { return Registry::parse(s); },
                  py::arg("text"))
      .def_static("load", &Registry::load, py::arg("path"))
      .def("save", &Registry::save, py::arg("path"))
      .def("to_text", &Registry::to_text)
      .def_property_readonly("version", &Registry::version)
      .def("records", &Registry::records, py::return_value_policy::reference_internal)
      .def("find", &Registry::find, py::arg("broker_id"),
           py::return_value_policy::reference_internal)
      .def("cloud", &Registry::cloud, py::return_value_policy::reference_internal)
      .def("responsible_broker", &Registry::responsible_broker, py::arg("p"),
           py::return_value_policy::reference_internal,
           "The edge broker whose area contains p, or the cloud broker");

  // --- scenario harness (deterministic simulated network) ---
  py::class_<ScenarioOptions>(m, "ScenarioOptions")
      .def(py::init<>())
      .def_readwrite("seed", &ScenarioOptions::seed)
      .def_readwrite("waypoints", &ScenarioOptions::waypoints)
      .def_readwrite("think_ms", &ScenarioOptions::think_ms)
      .def_readwrite("clients", &ScenarioOptions::clients)
      .def_readwrite("calls_per_client", &ScenarioOptions::calls_per_client)
      .def_readwrite("call_interval_ms", &ScenarioOptions::call_interval_ms)
      .def_readwrite("edge_capacity", &ScenarioOptions::edge_capacity)
      .def_readwrite("total_calls", &ScenarioOptions::total_calls)
      .def_readwrite("kill_after", &ScenarioOptions::kill_after)
      .def_readwrite("client_retries", &ScenarioOptions::client_retries);

  py::class_<CallRecord>(m, "CallRecord")
      .def_readonly("group", &CallRecord::group)
      .def_readonly("index", &CallRecord::index)
      .def_readonly("correlation_id", &CallRecord::correlation_id)
      .def_readonly("client", &CallRecord::client)
      .def_readonly("serving_node", &CallRecord::serving_node)
      .def_readonly("offloaded", &CallRecord::offloaded)
      .def_readonly("retried", &CallRecord::retried)
      .def_readonly("ok", &CallRecord::ok)
      .def_readonly("failure", &CallRecord::failure)
      .def_readonly("issued_ms", &CallRecord::issued_ms)
      .def_readonly("resolved_ms", &CallRecord::resolved_ms)
      .def_readonly("call_latency_ms", &CallRecord::call_latency_ms)
      .def_readonly("update_call_latency_ms", &CallRecord::update_call_latency_ms)
      .def_readonly("distance_km", &CallRecord::distance_km);

  py::class_<RunMetrics>(m, "RunMetrics")
      .def_readonly("scenario", &RunMetrics::scenario)
      .def_readonly("seed", &RunMetrics::seed)
      .def_readonly("group", &RunMetrics::group)
      .def_readonly("records", &RunMetrics::records)
      .def_readonly("issued", &RunMetrics::issued)
      .def_readonly("normal", &RunMetrics::normal)
      .def_readonly("offload", &RunMetrics::offload)
      .def_readonly("failed", &RunMetrics::failed)
      .def_readonly("handoffs", &RunMetrics::handoffs)
      .def_readonly("virtual_end_ms", &RunMetrics::virtual_end_ms)
      .def_readonly("events_text", &RunMetrics::events_text)
      .def_readonly("topology_text", &RunMetrics::topology_text)
      .def("conservation_ok", &RunMetrics::conservation_ok);

  m.def("distance_registry", &distance_registry);
  m.def("single_edge_registry", &single_edge_registry);
  m.def("distance_trace", &distance_trace, py::arg("waypoints") = 99);
  m.def("run_distance", &run_distance, py::arg("options") = ScenarioOptions{},
        py::call_guard<py::gil_scoped_release>(),
        "Mobility sweep: one call per waypoint while relocating along the trace");
  m.def("run_highload", &run_highload, py::arg("options"),
        py::call_guard<py::gil_scoped_release>(),
        "Parallel clients saturating one edge; overflow offloads to the cloud");
  m.def("run_highload_series", &run_highload_series, py::arg("options") = ScenarioOptions{},
        py::call_guard<py::gil_scoped_release>(), "The 1,2,4,8,16-client series");
  m.def("run_outage", &run_outage, py::arg("options") = ScenarioOptions{},
        py::call_guard<py::gil_scoped_release>(),
        "Sequential calls across a scripted edge shutdown");
  m.def("metrics_to_csv", &metrics_to_csv, py::arg("runs"));
  m.def("render_distance_plot", &render_distance_plot, py::arg("run"));
  m.def("render_highload_plot", &render_highload_plot, py::arg("runs"));
  m.def("render_outage_plot", &render_outage_plot, py::arg("run"));
  m.def("write_outputs", &write_outputs, py::arg("out_dir"), py::arg("scenario"), py::arg("runs"),
        "Writes metrics.csv, events.log, topology.txt, and the scenario plot");
}
