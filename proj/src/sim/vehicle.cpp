#include "cvp/sim/vehicle.hpp"

#include "cvp/core/error.hpp"
#include "cvp/sim/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cvp::sim {

using namespace std::chrono;

namespace {

constexpr double kTankLiters = 50.0;
constexpr double kReserveLiters = 10.0;
constexpr double kLitersPerKm = 0.065;
constexpr double kServiceIntervalKm = 30000.0;

double lerp(double a, double b, double f) { return a + (b - a) * f; }

double lerp_heading(double a, double b, double f)
{
    double d = std::fmod(b - a + 540.0, 360.0) - 180.0;
    double h = std::fmod(a + d * f + 360.0, 360.0);
    return h >= 360.0 ? 0.0 : h;
}

} // namespace

SimVehicle::SimVehicle(SimVehicleConfig config, Trace trace, Timestamp trace_start)
    : config_(std::move(config)), trace_(std::move(trace)), zone_(TimeZone::named(config_.time_zone)),
      trace_start_(trace_start)
{
    double km = 0;
    for (const Trip& trip : trace_) {
        km_before_.push_back(km);
        km += trip.distance_km;
    }
}

const Trip* SimVehicle::trip_at(Timestamp t) const
{
    auto it = std::upper_bound(trace_.begin(), trace_.end(), t, [](Timestamp v, const Trip& tr) { return v < tr.start; });
    if (it == trace_.begin())
        return nullptr;
    const Trip& trip = *std::prev(it);
    return t <= trip.end ? &trip : nullptr;
}

SimVehicle::Moment SimVehicle::moment(Timestamp t) const
{
    Moment m;
    m.pos = config_.home;
    m.odometer = config_.initial_odometer_km;
    auto it = std::upper_bound(trace_.begin(), trace_.end(), t, [](Timestamp v, const Trip& tr) { return v < tr.start; });
    if (it == trace_.begin())
        return m;
    std::size_t idx = static_cast<std::size_t>(std::prev(it) - trace_.begin());
    const Trip& trip = trace_[idx];
    const auto& ss = trip.samples;
    if (t >= trip.end) {
        m.pos = ss.back().pos;
        m.heading = ss.back().heading;
        m.odometer += km_before_[idx] + trip.distance_km;
        return m;
    }
    auto si = std::upper_bound(ss.begin(), ss.end(), t, [](Timestamp v, const MotionSample& s) { return v < s.t; });
    const MotionSample& a = *std::prev(si);
    const MotionSample& b = si == ss.end() ? a : *si;
    double f = b.t == a.t ? 0.0 : static_cast<double>((t - a.t).count()) / static_cast<double>((b.t - a.t).count());
    m.pos = {lerp(a.pos.lat, b.pos.lat, f), lerp(a.pos.lon, b.pos.lon, f)};
    m.speed_kmh = lerp(a.speed_kmh, b.speed_kmh, f);
    m.heading = lerp_heading(a.heading, b.heading, f);
    m.odometer += km_before_[idx] + lerp(a.distance_km, b.distance_km, f);
    m.driving = true;
    return m;
}

double SimVehicle::odometer_at(Timestamp t) const { return moment(t).odometer; }

GeoPoint SimVehicle::position_at(Timestamp t) const { return moment(t).pos; }

SampleValue SimVehicle::value_at(DataPointKind kind, Timestamp t) const
{
    Moment m = moment(t);
    double driven = m.odometer - config_.initial_odometer_km;
    switch (kind) {
    case DataPointKind::odometer:
        return Kilometers{m.odometer};
    case DataPointKind::gps_coordinates:
        return m.pos;
    case DataPointKind::heading:
        return HeadingDeg{m.heading};
    case DataPointKind::fuel_volume: {
        // sawtooth: refuelled to full whenever the reserve is reached
        double cycle = (kTankLiters - kReserveLiters) / kLitersPerKm;
        return Liters{kTankLiters - kLitersPerKm * std::fmod(driven, cycle)};
    }
    case DataPointKind::distance_to_next_maintenance:
        return Kilometers{kServiceIntervalKm - std::fmod(m.odometer, kServiceIntervalKm)};
    case DataPointKind::doors_lock_state:
        return LockState{!m.driving};
    case DataPointKind::hood_position:
        return HoodState{false};
    case DataPointKind::outside_temperature: {
        auto local = zone_.to_local(t);
        auto day = floor<days>(local);
        year_month_day ymd{day};
        double doy = static_cast<double>((day - local_days{ymd.year() / January / 1}).count());
        double hour = duration<double>(local - day).count() / 3600.0;
        double c = 10.0 + 8.0 * std::sin(2 * std::numbers::pi * (doy - 110.0) / 365.25) +
                   4.0 * std::sin(2 * std::numbers::pi * (hour - 9.0) / 24.0);
        return Celsius{std::round(c * 2.0) / 2.0};
    }
    case DataPointKind::brake_fluid_change_date: {
        auto due = floor<days>(trace_start_) + days{200 + static_cast<int>(fnv1a(vin().str()) % 500)};
        return CalendarDate{year_month_day{due}};
    }
    case DataPointKind::acceleration_evaluation:
        return OpaqueText{"balanced"};
    case DataPointKind::driving_style:
        return OpaqueText{"smooth"};
    }
    throw Error(Errc::UnsupportedKind, std::string(to_string(kind)));
}

std::vector<TelemetrySample> SimVehicle::read(const DataPointKinds& kinds, Timestamp t) const
{
    std::vector<TelemetrySample> out;
    for (DataPointKind k : kinds)
        out.push_back({vin(), k, value_at(k, t), t, SampleSource::request});
    return out;
}

int SimVehicle::trips_between(Timestamp from, Timestamp to) const
{
    int n = 0;
    for (const Trip& trip : trace_)
        n += trip.start >= from && trip.end <= to;
    return n;
}

std::vector<Emission> SimVehicle::emissions() const
{
    std::vector<Emission> out;
    const Millis every{std::llround(config_.trip_model.gps_emit_interval_s * 1000.0)};
    for (const Trip& trip : trace_) {
        Timestamp t = trip.start + every;
        for (; t < trip.end; t += every)
            out.push_back({t, NotificationKind::location_change});
        out.push_back({trip.end, NotificationKind::location_change});
    }
    for (const auto& e : config_.fault_plan.events)
        out.push_back({e.at, e.kind});
    std::stable_sort(out.begin(), out.end(), [](const Emission& a, const Emission& b) { return a.at < b.at; });
    return out;
}

} // namespace cvp::sim
