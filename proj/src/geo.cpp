#include "geofaas/geo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace geofaas {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kKmPerDegLat = kEarthRadiusKm * kDegToRad;

// Points within this distance of a boundary edge count as inside (closed fences).
constexpr double kBoundaryEpsKm = 1e-6;

double cross2(PlanarOffset a, PlanarOffset b, PlanarOffset q) {
  return (b.x_km - a.x_km) * (q.y_km - a.y_km) - (q.x_km - a.x_km) * (b.y_km - a.y_km);
}

double dist_point_segment(PlanarOffset p, PlanarOffset a, PlanarOffset b) {
  const double dx = b.x_km - a.x_km;
  const double dy = b.y_km - a.y_km;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((p.x_km - a.x_km) * dx + (p.y_km - a.y_km) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  const double px = a.x_km + t * dx - p.x_km;
  const double py = a.y_km + t * dy - p.y_km;
  return std::hypot(px, py);
}

// Ray casting on the tangent plane anchored at `origin`; boundary-inclusive.
bool point_in_polygon(GeoPoint origin, const std::vector<GeoPoint>& verts, GeoPoint p) {
  std::vector<PlanarOffset> pts;
  pts.reserve(verts.size());
  for (const auto& v : verts) pts.push_back(to_plane(origin, v));
  const PlanarOffset q = to_plane(origin, p);

  for (size_t i = 0; i < pts.size(); ++i) {
    if (dist_point_segment(q, pts[i], pts[(i + 1) % pts.size()]) <= kBoundaryEpsKm) return true;
  }
  bool inside = false;
  for (size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
    const auto& a = pts[i];
    const auto& b = pts[j];
    if ((a.y_km > q.y_km) != (b.y_km > q.y_km)) {
      const double x = a.x_km + (q.y_km - a.y_km) / (b.y_km - a.y_km) * (b.x_km - a.x_km);
      if (q.x_km < x) inside = !inside;
    }
  }
  return inside;
}

bool segments_properly_intersect(PlanarOffset a, PlanarOffset b, PlanarOffset c, PlanarOffset d) {
  const double d1 = cross2(c, d, a);
  const double d2 = cross2(c, d, b);
  const double d3 = cross2(a, b, c);
  const double d4 = cross2(a, b, d);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

struct BBox {
  double lo_lat, hi_lat, lo_lon, hi_lon;
};

BBox fence_bbox(const Geofence& f) {
  if (f.kind() == Geofence::Kind::Circle) {
    const double r = f.radius_km();
    const GeoPoint c = f.center();
    const double dlat = r / kKmPerDegLat;
    const double dlon = r / (kKmPerDegLat * std::cos(c.lat * kDegToRad));
    return {c.lat - dlat, c.lat + dlat, c.lon - dlon, c.lon + dlon};
  }
  const auto& vs = f.vertices();
  BBox b{vs[0].lat, vs[0].lat, vs[0].lon, vs[0].lon};
  double max_r = 0.0;
  GeoPoint anchor = f.kind() == Geofence::Kind::Hexagon ? f.center() : vs[0];
  for (const auto& v : vs) {
    b.lo_lat = std::min(b.lo_lat, v.lat);
    b.hi_lat = std::max(b.hi_lat, v.lat);
    b.lo_lon = std::min(b.lo_lon, v.lon);
    b.hi_lon = std::max(b.hi_lon, v.lon);
    max_r = std::max(max_r, haversine_km(anchor, v));
  }
  const double margin = 0.01 * std::max(max_r, 0.1);
  const double dlat = margin / kKmPerDegLat;
  const double mid = 0.5 * (b.lo_lat + b.hi_lat);
  const double dlon = margin / (kKmPerDegLat * std::cos(mid * kDegToRad));
  return {b.lo_lat - dlat, b.hi_lat + dlat, b.lo_lon - dlon, b.hi_lon + dlon};
}

std::vector<GeoPoint> hexagon_vertices(GeoPoint center, double circumradius_km) {
  std::vector<GeoPoint> vs;
  vs.reserve(6);
  for (int b = 0; b < 360; b += 60) {
    vs.push_back(destination(center, static_cast<double>(b), circumradius_km));
  }
  return vs;
}

double parse_double(std::string_view s) {
  double out = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("geofence: bad number '" + std::string(s) + "'");
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

GeoPoint normalized(GeoPoint p) {
  if (std::isnan(p.lat) || std::isnan(p.lon) || p.lat < -90.0 || p.lat > 90.0) {
    throw std::invalid_argument("latitude out of range [-90, 90]");
  }
  double lon = std::fmod(p.lon, 360.0);
  if (lon <= -180.0) lon += 360.0;
  if (lon > 180.0) lon -= 360.0;
  return {p.lat, lon};
}

double haversine_km(GeoPoint a, GeoPoint b) {
  const double lat1 = a.lat * kDegToRad;
  const double lat2 = b.lat * kDegToRad;
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1) * std::cos(lat2) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(s)));
}

GeoPoint destination(GeoPoint origin, double bearing_deg, double distance_km) {
  const double lat1 = origin.lat * kDegToRad;
  const double lon1 = origin.lon * kDegToRad;
  const double th = bearing_deg * kDegToRad;
  const double d = distance_km / kEarthRadiusKm;
  const double lat2 =
      std::asin(std::sin(lat1) * std::cos(d) + std::cos(lat1) * std::sin(d) * std::cos(th));
  const double lon2 = lon1 + std::atan2(std::sin(th) * std::sin(d) * std::cos(lat1),
                                        std::cos(d) - std::sin(lat1) * std::sin(lat2));
  return normalized({lat2 / kDegToRad, lon2 / kDegToRad});
}

PlanarOffset to_plane(GeoPoint origin, GeoPoint p) {
  return {(p.lon - origin.lon) * kDegToRad * kEarthRadiusKm * std::cos(origin.lat * kDegToRad),
          (p.lat - origin.lat) * kDegToRad * kEarthRadiusKm};
}

GeoPoint from_plane(GeoPoint origin, PlanarOffset o) {
  return normalized(
      {origin.lat + o.y_km / kKmPerDegLat,
       origin.lon + o.x_km / (kKmPerDegLat * std::cos(origin.lat * kDegToRad))});
}

Geofence Geofence::world() {
  Geofence f;
  f.kind_ = Kind::World;
  return f;
}

Geofence Geofence::circle(GeoPoint center, double radius_km) {
  if (!(radius_km > 0.0)) throw std::invalid_argument("circle radius must be positive");
  Geofence f;
  f.kind_ = Kind::Circle;
  f.center_ = normalized(center);
  f.radius_km_ = radius_km;
  return f;
}

Geofence Geofence::hexagon(GeoPoint center, double circumradius_km) {
  if (!(circumradius_km > 0.0)) throw std::invalid_argument("hexagon radius must be positive");
  Geofence f;
  f.kind_ = Kind::Hexagon;
  f.center_ = normalized(center);
  f.radius_km_ = circumradius_km;
  f.vertices_ = hexagon_vertices(f.center_, circumradius_km);
  return f;
}

Geofence Geofence::polygon(std::vector<GeoPoint> vertices) {
  if (vertices.size() < 3) throw std::invalid_argument("polygon needs >= 3 vertices");
  for (auto& v : vertices) v = normalized(v);

  const GeoPoint anchor = vertices.front();
  std::vector<PlanarOffset> pts;
  pts.reserve(vertices.size());
  for (const auto& v : vertices) pts.push_back(to_plane(anchor, v));

  double area2 = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    const auto& a = pts[i];
    const auto& b = pts[(i + 1) % pts.size()];
    area2 += a.x_km * b.y_km - b.x_km * a.y_km;
  }
  if (!(area2 > 0.0)) throw std::invalid_argument("polygon vertices must be counter-clockwise");

  const size_t n = pts.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_properly_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n])) {
        throw std::invalid_argument("polygon must not self-intersect");
      }
    }
  }

  Geofence f;
  f.kind_ = Kind::Polygon;
  f.vertices_ = std::move(vertices);
  PlanarOffset c{};
  for (const auto& p : pts) {
    c.x_km += p.x_km / static_cast<double>(n);
    c.y_km += p.y_km / static_cast<double>(n);
  }
  f.center_ = from_plane(anchor, c);
  return f;
}

bool Geofence::contains(GeoPoint p) const {
  p = normalized(p);
  switch (kind_) {
    case Kind::World:
      return true;
    case Kind::Circle:
      return haversine_km(center_, p) <= radius_km_ + kBoundaryEpsKm;
    case Kind::Hexagon:
    case Kind::Polygon:
      return point_in_polygon(center_, vertices_, p);
  }
  return false;
}

std::string Geofence::to_text() const {
  switch (kind_) {
    case Kind::World:
      return "world";
    case Kind::Circle:
      return "circle(" + format_double(center_.lat) + "," + format_double(center_.lon) + "," +
             format_double(radius_km_) + ")";
    case Kind::Hexagon:
      return "hexagon(" + format_double(center_.lat) + "," + format_double(center_.lon) + "," +
             format_double(radius_km_) + ")";
    case Kind::Polygon: {
      std::string out = "polygon(";
      for (size_t i = 0; i < vertices_.size(); ++i) {
        if (i) out += ";";
        out += "(" + format_double(vertices_[i].lat) + "," + format_double(vertices_[i].lon) + ")";
      }
      return out + ")";
    }
  }
  return "world";
}

Geofence Geofence::parse(std::string_view text) {
  auto strip = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = strip(text);
  if (text == "world") return world();

  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') {
    throw std::invalid_argument("geofence: unparseable '" + std::string(text) + "'");
  }
  const std::string_view name = strip(text.substr(0, open));
  const std::string_view body = text.substr(open + 1, text.size() - open - 2);

  auto split = [&](std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    size_t start = 0;
    while (start <= s.size()) {
      auto pos = s.find(sep, start);
      if (pos == std::string_view::npos) pos = s.size();
      parts.push_back(strip(s.substr(start, pos - start)));
      start = pos + 1;
    }
    return parts;
  };

  if (name == "circle" || name == "hexagon") {
    const auto parts = split(body, ',');
    if (parts.size() != 3) throw std::invalid_argument("geofence: expected (lat,lon,r_km)");
    const GeoPoint c{parse_double(parts[0]), parse_double(parts[1])};
    const double r = parse_double(parts[2]);
    return name == "circle" ? circle(c, r) : hexagon(c, r);
  }
  if (name == "polygon") {
    std::vector<GeoPoint> vs;
    for (auto part : split(body, ';')) {
      if (part.size() < 2 || part.front() != '(' || part.back() != ')') {
        throw std::invalid_argument("geofence: polygon vertex must be (lat,lon)");
      }
      const auto nums = split(part.substr(1, part.size() - 2), ',');
      if (nums.size() != 2) throw std::invalid_argument("geofence: polygon vertex must be (lat,lon)");
      vs.push_back({parse_double(nums[0]), parse_double(nums[1])});
    }
    return polygon(std::move(vs));
  }
  throw std::invalid_argument("geofence: unknown kind '" + std::string(name) + "'");
}

bool fences_disjoint(const Geofence& a, const Geofence& b, double grid_km) {
  if (a.kind() == Geofence::Kind::World || b.kind() == Geofence::Kind::World) {
    throw std::invalid_argument("fences_disjoint: World overlaps everything");
  }
  if (!(grid_km > 0.0)) throw std::invalid_argument("fences_disjoint: grid must be positive");

  const BBox ba = fence_bbox(a);
  const BBox bb = fence_bbox(b);
  const double lo_lat = std::max(ba.lo_lat, bb.lo_lat);
  const double hi_lat = std::min(ba.hi_lat, bb.hi_lat);
  const double lo_lon = std::max(ba.lo_lon, bb.lo_lon);
  const double hi_lon = std::min(ba.hi_lon, bb.hi_lon);
  if (lo_lat >= hi_lat || lo_lon >= hi_lon) return true;

  const double mid_lat = 0.5 * (lo_lat + hi_lat);
  const double step_lat = grid_km / kKmPerDegLat;
  const double step_lon = grid_km / (kKmPerDegLat * std::cos(mid_lat * kDegToRad));
  const auto n_lat = static_cast<long>(std::ceil((hi_lat - lo_lat) / step_lat));
  const auto n_lon = static_cast<long>(std::ceil((hi_lon - lo_lon) / step_lon));
  for (long i = 0; i < std::max(1L, n_lat); ++i) {
    for (long j = 0; j < std::max(1L, n_lon); ++j) {
      const GeoPoint p{lo_lat + (i + 0.5) * (hi_lat - lo_lat) / std::max(1L, n_lat),
                       lo_lon + (j + 0.5) * (hi_lon - lo_lon) / std::max(1L, n_lon)};
      if (a.contains(p) && b.contains(p)) return false;
    }
  }
  return true;
}

}  // namespace geofaas
