#include "cvp/core/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cvp::geo {

namespace {

constexpr double kRad = std::numbers::pi / 180.0;

} // namespace

double distance_km(const GeoPoint& a, const GeoPoint& b)
{
    double phi1 = a.lat * kRad, phi2 = b.lat * kRad;
    double dphi = (b.lat - a.lat) * kRad, dlambda = (b.lon - a.lon) * kRad;
    double h = std::sin(dphi / 2) * std::sin(dphi / 2) +
               std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) * std::sin(dlambda / 2);
    return 2 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

double bearing_deg(const GeoPoint& a, const GeoPoint& b)
{
    double phi1 = a.lat * kRad, phi2 = b.lat * kRad, dlambda = (b.lon - a.lon) * kRad;
    double y = std::sin(dlambda) * std::cos(phi2);
    double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlambda);
    double deg = std::atan2(y, x) / kRad;
    return std::fmod(deg + 360.0, 360.0);
}

GeoPoint destination(const GeoPoint& start, double bearing, double km)
{
    double delta = km / kEarthRadiusKm, theta = bearing * kRad;
    double phi1 = start.lat * kRad, lambda1 = start.lon * kRad;
    double phi2 = std::asin(std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(theta));
    double lambda2 = lambda1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(phi1),
                                          std::cos(delta) - std::sin(phi1) * std::sin(phi2));
    double lon = std::fmod(lambda2 / kRad + 540.0, 360.0) - 180.0;
    return GeoPoint{phi2 / kRad, lon};
}

double distance_to_segment_km(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b)
{
    double k = kEarthRadiusKm * kRad;
    double c = std::cos(p.lat * kRad);
    auto project = [&](const GeoPoint& q) { return std::pair{(q.lon - p.lon) * c * k, (q.lat - p.lat) * k}; };
    auto [ax, ay] = project(a);
    auto [bx, by] = project(b);
    double dx = bx - ax, dy = by - ay;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? std::clamp(-(ax * dx + ay * dy) / len2, 0.0, 1.0) : 0.0;
    double x = ax + t * dx, y = ay + t * dy;
    return std::hypot(x, y);
}

GeoPoint midpoint(const GeoPoint& a, const GeoPoint& b)
{
    double d = distance_km(a, b);
    if (d == 0)
        return a;
    return destination(a, bearing_deg(a, b), d / 2);
}

} // namespace cvp::geo
