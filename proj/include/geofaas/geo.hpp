#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace geofaas {

inline constexpr double kEarthRadiusKm = 6371.0;

/// WGS-ish point on the sphere. lat in [-90, 90], lon normalized to (-180, 180].
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const GeoPoint&) const = default;
};

/// Validates latitude and wraps longitude into (-180, 180]. Idempotent.
GeoPoint normalized(GeoPoint p);

/// Great-circle distance, mean earth radius 6371 km. Symmetric, zero iff equal.
double haversine_km(GeoPoint a, GeoPoint b);

/// Point reached from `origin` after `distance_km` along the initial bearing (degrees, 0 = north).
GeoPoint destination(GeoPoint origin, double bearing_deg, double distance_km);

/// East/north offsets on the local tangent plane anchored at `origin`, in km.
struct PlanarOffset {
  double x_km = 0.0;
  double y_km = 0.0;
};

PlanarOffset to_plane(GeoPoint origin, GeoPoint p);
GeoPoint from_plane(GeoPoint origin, PlanarOffset o);

/// Geographic region used for broker/service areas and subscription filters.
/// Closed: boundary points count as inside. Polygon tests run on the local
/// tangent plane, which is accurate at the tens-of-km scale areas here use.
class Geofence {
 public:
  enum class Kind { World, Circle, Hexagon, Polygon };

  static Geofence world();
  static Geofence circle(GeoPoint center, double radius_km);
  /// Pointy-top hexagon: vertices at circumradius distance, bearings 0,60,...,300.
  static Geofence hexagon(GeoPoint center, double circumradius_km);
  /// >= 3 vertices, counter-clockwise, non-self-intersecting.
  static Geofence polygon(std::vector<GeoPoint> vertices);

  Kind kind() const { return kind_; }
  GeoPoint center() const { return center_; }
  double radius_km() const { return radius_km_; }
  /// Hexagon/Polygon vertices; empty for World and Circle.
  const std::vector<GeoPoint>& vertices() const { return vertices_; }

  bool contains(GeoPoint p) const;

  /// Text form: world | circle(lat,lon,r_km) | hexagon(lat,lon,r_km)
  ///           | polygon((lat,lon);(lat,lon);...)
  std::string to_text() const;
  static Geofence parse(std::string_view text);

  bool operator==(const Geofence&) const = default;

 private:
  Geofence() = default;

  Kind kind_ = Kind::World;
  GeoPoint center_{};
  double radius_km_ = 0.0;
  std::vector<GeoPoint> vertices_;
};

/// Grid-sampled interior-overlap test used for registry validation.
/// Rejects World inputs (World overlaps everything).
bool fences_disjoint(const Geofence& a, const Geofence& b, double grid_km = 0.5);

}  // namespace geofaas
