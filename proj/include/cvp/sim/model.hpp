#pragma once

#include "cvp/core/codec.hpp"
#include "cvp/core/types.hpp"

#include <optional>
#include <vector>

namespace cvp::sim {

struct SpeedProfile {
    double urban_share = 0.6;
    double rural_share = 0.3;
    double highway_share = 0.1;
    double urban_kmh = 40;
    double rural_kmh = 75;
    double highway_kmh = 115;

    bool operator==(const SpeedProfile&) const = default;
};

struct TripModel {
    double trips_per_day = 2.0;
    double trip_length_km_mean = 12.0;
    double trip_length_km_spread = 4.0; // standard deviation
    double night_trip_fraction = 0.1;
    SpeedProfile speed_profile;
    double harsh_brake_rate = 2.0; // events per 100 km
    double gps_emit_interval_s = 30;

    bool operator==(const TripModel&) const = default;
};

/// Throws Error{InvalidConfig}.
void validate(const TripModel& model);

struct TimeWindow {
    Timestamp from{};
    Timestamp to{};

    bool contains(Timestamp t) const { return t >= from && t < to; }
    bool operator==(const TimeWindow&) const = default;
};

struct ScriptedEvent {
    Timestamp at{};
    NotificationKind kind = NotificationKind::accident_reported;

    bool operator==(const ScriptedEvent&) const = default;
};

struct FaultPlan {
    int transmission_test_failures = 0; // the first N tests fail
    std::vector<TimeWindow> api_outages;
    std::vector<ScriptedEvent> events;

    bool operator==(const FaultPlan&) const = default;
};

struct SimVehicleConfig {
    SimVehicleConfig(Vin v, BrandId p) : vin(std::move(v)), profile(std::move(p)) {}

    Vin vin;
    BrandId profile;
    GeoPoint home{49.6116, 6.1319};
    TripModel trip_model;
    PrivacyMechanism privacy_mechanism = PrivacyMechanism::double_push;
    FaultPlan fault_plan;
    std::string time_zone = "Europe/Luxembourg";
    double initial_odometer_km = 20000;

    bool operator==(const SimVehicleConfig&) const = default;
};

Json encode(const TripModel& m);
TripModel decode_trip_model(const Json& j);
Json encode(const FaultPlan& f);
FaultPlan decode_fault_plan(const Json& j);
Json encode(const SimVehicleConfig& c);
SimVehicleConfig decode_vehicle_config(const Json& j);

/// Named trip models calibrated against the study's collection volumes:
/// "bmw-116d", "bmw-x5", "mercedes-gla", "mercedes-gle", "commuter",
/// "analytics" (1 s GPS cadence for the analytics fixtures).
TripModel named_trip_model(std::string_view name);

/// Shipped fault plan for a named scenario ("mercedes-gla", "mercedes-gle",
/// "none"), anchored at `start`.
FaultPlan named_fault_plan(std::string_view name, Timestamp start);

} // namespace cvp::sim
