#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "dtp/core/error.hpp"
#include "dtp/core/geometry.hpp"

namespace dtp {

struct GeoCoordinate {
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, [-180, 180]
  double altitude = 0.0;   // meters

  bool operator==(const GeoCoordinate&) const = default;
};

/// Mean Earth radius used by the flat-earth ENU approximation.
inline constexpr double kEarthRadius = 6'371'000.0;

inline void validate(const GeoCoordinate& c) {
  if (!std::isfinite(c.latitude) || c.latitude < -90.0 || c.latitude > 90.0) {
    throw ValidationError("latitude out of range: " + std::to_string(c.latitude));
  }
  if (!std::isfinite(c.longitude) || c.longitude < -180.0 || c.longitude > 180.0) {
    throw ValidationError("longitude out of range: " + std::to_string(c.longitude));
  }
  if (!std::isfinite(c.altitude)) throw ValidationError("altitude not finite");
}

/// Local ENU offset of `c` from `origin`; intended for spans below ~10 km.
inline Vec3 geo_to_enu(const GeoCoordinate& c, const GeoCoordinate& origin) {
  validate(c);
  validate(origin);
  constexpr double to_rad = std::numbers::pi / 180.0;
  double dlat = (c.latitude - origin.latitude) * to_rad;
  double dlon = (c.longitude - origin.longitude) * to_rad;
  return Vec3(kEarthRadius * std::cos(origin.latitude * to_rad) * dlon, kEarthRadius * dlat,
              c.altitude - origin.altitude);
}

inline GeoCoordinate enu_to_geo(const Vec3& enu, const GeoCoordinate& origin) {
  validate(origin);
  constexpr double to_deg = 180.0 / std::numbers::pi;
  double cos_lat = std::cos(origin.latitude * std::numbers::pi / 180.0);
  if (cos_lat < 1e-12) throw ValidationError("ENU frame undefined at the poles");
  GeoCoordinate c{origin.latitude + enu.y() / kEarthRadius * to_deg,
                  origin.longitude + enu.x() / (kEarthRadius * cos_lat) * to_deg,
                  origin.altitude + enu.z()};
  validate(c);
  return c;
}

}  // namespace dtp
