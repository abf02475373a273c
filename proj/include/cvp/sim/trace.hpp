#pragma once

#include "cvp/core/time_zone.hpp"
#include "cvp/sim/model.hpp"

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

namespace cvp::sim {

/// Ground-truth vehicle state, one per whole second of a trip plus the
/// arrival instant.
struct MotionSample {
    Timestamp t{};
    GeoPoint pos;
    double speed_kmh = 0;
    double heading = 0;
    double distance_km = 0; // driven since departure

    bool operator==(const MotionSample&) const = default;
};

struct Trip {
    int id = 0;
    Timestamp start{};
    Timestamp end{};
    bool night = false;
    std::vector<MotionSample> samples;
    double distance_km = 0;
    double night_km = 0;
    std::vector<Timestamp> harsh_brakes; // instant each scripted brake began

    bool operator==(const Trip&) const = default;
};

using Trace = std::vector<Trip>;

/// Schedule-level decisions, before any motion is synthesized.
struct TripPlan {
    int id = 0;
    Timestamp start{};
    double length_km = 0;
    bool night = false;
    std::uint64_t seed = 0;
};

/// Deterministic in (model, zone, start, days, seed). Night trips are
/// chosen so the night share of planned distance tracks
/// night_trip_fraction; consecutive trips are at least 10 minutes apart.
std::vector<TripPlan> plan_trips(const TripModel& model, const TimeZone& zone, Timestamp start, int days,
                                 std::uint64_t seed);

/// Motion synthesis: piecewise-constant acceleration (1.5 m/s^2 for normal
/// speed changes), cruise speeds per road class, scripted harsh brakes of
/// 30-50 km/h at 6-7 m/s^2 separated by at least 15 s.
Trip realize_trip(const TripPlan& plan, const TripModel& model, const TimeZone& zone, const GeoPoint& from,
                  double initial_heading);

Trace generate_trace(const SimVehicleConfig& config, Timestamp start, int days, std::uint64_t seed);

/// One leg of a hand-scripted drive: accelerate (or brake) at `accel_mps2`
/// for `seconds` while heading `heading`.
struct Leg {
    double heading = 0;
    double accel_mps2 = 0;
    double seconds = 0;
};

/// Builds a trip from explicit legs, starting at rest at `from`.
Trip scripted_trip(int id, Timestamp start, const GeoPoint& from, const std::vector<Leg>& legs, const TimeZone& zone);

/// Night share of a trip by segment midpoint in [22:00, 05:00) local.
double night_km_of(const std::vector<MotionSample>& samples, const TimeZone& zone);

/// JSON-lines, one trip per line.
std::string export_trace_jsonl(const Trace& trace);
Trace import_trace_jsonl(std::istream& in);

} // namespace cvp::sim
