#pragma once

#include "cvp/core/time_zone.hpp"
#include "cvp/sim/trace.hpp"

#include <vector>

namespace cvp::sim {

struct Emission {
    Timestamp at{};
    NotificationKind kind = NotificationKind::location_change;
};

/// A simulated car: its configuration, its pre-generated trace and the
/// state derived from them at any instant.
class SimVehicle {
public:
    SimVehicle(SimVehicleConfig config, Trace trace, Timestamp trace_start);

    const SimVehicleConfig& config() const { return config_; }
    const Vin& vin() const { return config_.vin; }
    const Trace& trace() const { return trace_; }
    const TimeZone& zone() const { return zone_; }

    /// Trip in progress at `t` (start <= t <= end), or null when parked.
    const Trip* trip_at(Timestamp t) const;
    bool driving_at(Timestamp t) const { return trip_at(t) != nullptr; }

    double odometer_at(Timestamp t) const;
    GeoPoint position_at(Timestamp t) const;

    SampleValue value_at(DataPointKind kind, Timestamp t) const;

    /// One sample per kind, all observed at `t`.
    std::vector<TelemetrySample> read(const DataPointKinds& kinds, Timestamp t) const;

    /// Trips started at or after `from` and finished by `to`.
    int trips_between(Timestamp from, Timestamp to) const;

    /// location_change every gps_emit_interval while driving (plus one on
    /// arrival) and the fault plan's scripted events, in time order.
    std::vector<Emission> emissions() const;

    void set_fault_plan(FaultPlan plan) { config_.fault_plan = std::move(plan); }

private:
    struct Moment {
        GeoPoint pos;
        double speed_kmh = 0;
        double heading = 0;
        double odometer = 0;
        bool driving = false;
    };

    Moment moment(Timestamp t) const;

    SimVehicleConfig config_;
    Trace trace_;
    TimeZone zone_;
    Timestamp trace_start_;
    std::vector<double> km_before_; // cumulative distance before each trip
};

} // namespace cvp::sim
