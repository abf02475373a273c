#pragma once

#include "cvp/core/time_zone.hpp"
#include "cvp/core/types.hpp"

#include <chrono>
#include <vector>

namespace cvp::analytics {

struct TrackPoint {
    Timestamp t;
    GeoPoint pos;

    bool operator==(const TrackPoint&) const = default;
};

using Track = std::vector<TrackPoint>;

struct NightWindow {
    Millis starts{std::chrono::hours{22}};
    Millis ends{std::chrono::hours{5}};

    /// Local time of day inside [starts, ends), wrapping midnight.
    bool contains(Millis time_of_day) const;
};

struct SegmentationConfig {
    Millis idle_gap{std::chrono::seconds{300}};
    double dwell_radius_km = 0.05; // staying this close for longer than idle_gap is a stop
    double min_trip_km = 0.1;
};

/// Splits a chronological GPS series into trips: a gap longer than
/// idle_gap, or a dwell within dwell_radius for longer than idle_gap, ends
/// a trip. Trips with fewer than 2 points or shorter than min_trip_km are
/// dropped. Throws UnorderedPoints.
std::vector<Track> segment_trips(const Track& points, const SegmentationConfig& config = {});

/// Sum of great-circle legs. Throws UnorderedPoints.
double compute_distance(const Track& points);

struct SpeedSegment {
    TrackPoint from;
    TrackPoint to;
    double km = 0;
    double kmh = 0;

    Timestamp mid() const { return from.t + (to.t - from.t) / 2; }
};

/// One segment per consecutive pair; pairs further apart than idle_gap are
/// left out. Throws ZeroTimeDelta, UnorderedPoints.
std::vector<SpeedSegment> estimate_speeds(const Track& points, Millis idle_gap = std::chrono::seconds{300});

struct HarshBrake {
    Timestamp at;        // midpoint of the first decelerating segment
    double peak_mps2 = 0;
    double from_kmh = 0;
    double to_kmh = 0;

    bool operator==(const HarshBrake&) const = default;
};

/// Deceleration between consecutive segments is the speed drop over the
/// time between their midpoints. A run of pairs decelerating at >= floor is
/// one braking episode; it is an event when its peak reaches the threshold.
/// Episodes do not depend on the threshold, so raising it can only drop
/// events.
std::vector<HarshBrake> detect_harsh_brakes(const std::vector<SpeedSegment>& speeds, double threshold_mps2 = 3.5,
                                            double floor_mps2 = 0.5);

/// Distance of the legs whose midpoint falls in the local night window.
double night_km(const Track& points, const TimeZone& zone, NightWindow window = {});

} // namespace cvp::analytics
