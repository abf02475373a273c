#pragma once

#include "cvp/analytics/track.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cvp::analytics {

struct RoadInfo {
    std::string segment_id;
    RoadClass road_class = RoadClass::urban;
    int limit_kmh = 50;
};

/// Where road attributes come from. Weather, traffic or accident statistics
/// would sit behind the same kind of port.
class MapProvider {
public:
    virtual ~MapProvider() = default;
    virtual std::optional<RoadInfo> road_at(const GeoPoint& p, double radius_km) const = 0;
    virtual bool empty() const = 0;
};

struct MapSegment {
    std::string id;
    RoadClass road_class = RoadClass::urban;
    int limit_kmh = 50;
    std::vector<GeoPoint> polyline;
};

/// Plain-text road geometry, one segment per line:
///
///   # comment
///   segment <id> <urban|rural|highway> <limit_kmh> lat,lon lat,lon ...
class SpeedLimitMap final : public MapProvider {
public:
    SpeedLimitMap() = default;

    /// Throws InvalidConfig: limit outside 20..130, fewer than two distinct
    /// points, duplicate id.
    void add(MapSegment segment);
    const std::vector<MapSegment>& segments() const { return segments_; }

    /// Nearest segment within radius_km.
    std::optional<RoadInfo> road_at(const GeoPoint& p, double radius_km) const override;
    bool empty() const override { return segments_.empty(); }

private:
    std::vector<MapSegment> segments_;
};

/// Throws ParseError (with the line number) or InvalidConfig.
SpeedLimitMap parse_speed_map(std::istream& in);
SpeedLimitMap load_speed_map(const std::string& path);
std::string format_speed_map(const SpeedLimitMap& map);

struct ClassBreakdown {
    double km = 0;
    double overspeed_km = 0;
};

struct OverspeedResult {
    double distance_km = 0;
    double overspeed_km = 0;
    double uncovered_km = 0;
    std::map<RoadClass, ClassBreakdown> by_class;
};

struct OverspeedConfig {
    double match_radius_km = 0.03;
    double tolerance_kmh = 3;
    Millis idle_gap{std::chrono::seconds{300}};
};

/// Each speed segment is matched at its midpoint; it counts as overspeed
/// when its speed exceeds limit + tolerance. Throws EmptyMap.
OverspeedResult compute_overspeed(const Track& points, const MapProvider& map, const OverspeedConfig& config = {});

} // namespace cvp::analytics
