#pragma once

#include "cvp/core/types.hpp"

namespace cvp::geo {

inline constexpr double kEarthRadiusKm = 6371.0088;

/// Great-circle distance (haversine) on the mean-radius sphere.
double distance_km(const GeoPoint& a, const GeoPoint& b);

/// Initial bearing from `a` to `b`, degrees in [0, 360).
double bearing_deg(const GeoPoint& a, const GeoPoint& b);

/// Point reached from `start` after `km` along the great circle with
/// initial bearing `bearing`.
GeoPoint destination(const GeoPoint& start, double bearing, double km);

/// Distance from `p` to segment [a, b] in km, on a local equirectangular
/// projection (fine for the sub-kilometre scales of map matching).
double distance_to_segment_km(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b);

/// Great-circle midpoint.
GeoPoint midpoint(const GeoPoint& a, const GeoPoint& b);

} // namespace cvp::geo
