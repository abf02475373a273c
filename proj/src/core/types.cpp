#include "cvp/core/types.hpp"

#include "cvp/core/error.hpp"

#include <cmath>

namespace cvp {

bool value_matches_kind(DataPointKind kind, const SampleValue& value)
{
    switch (kind) {
    case DataPointKind::odometer:
    case DataPointKind::distance_to_next_maintenance:
        return std::holds_alternative<Kilometers>(value);
    case DataPointKind::gps_coordinates: return std::holds_alternative<GeoPoint>(value);
    case DataPointKind::heading: return std::holds_alternative<HeadingDeg>(value);
    case DataPointKind::fuel_volume: return std::holds_alternative<Liters>(value);
    case DataPointKind::doors_lock_state: return std::holds_alternative<LockState>(value);
    case DataPointKind::hood_position: return std::holds_alternative<HoodState>(value);
    case DataPointKind::outside_temperature: return std::holds_alternative<Celsius>(value);
    case DataPointKind::brake_fluid_change_date: return std::holds_alternative<CalendarDate>(value);
    case DataPointKind::acceleration_evaluation:
    case DataPointKind::driving_style:
        return std::holds_alternative<OpaqueText>(value);
    }
    return false;
}

std::string_view to_string(SampleSource s)
{
    return s == SampleSource::request ? "request" : "notification";
}

SampleSource parse_sample_source(std::string_view s)
{
    if (s == "request")
        return SampleSource::request;
    if (s == "notification")
        return SampleSource::notification;
    throw Error(Errc::ParseError, "unknown sample source '" + std::string(s) + "'");
}

std::string_view to_string(PrivacyMechanism m)
{
    switch (m) {
    case PrivacyMechanism::double_push: return "double_push";
    case PrivacyMechanism::screen_v1: return "screen_v1";
    case PrivacyMechanism::screen_v2: return "screen_v2";
    case PrivacyMechanism::screen_v3: return "screen_v3";
    }
    return "?";
}

PrivacyMechanism parse_privacy_mechanism(std::string_view s)
{
    for (auto m : {PrivacyMechanism::double_push, PrivacyMechanism::screen_v1, PrivacyMechanism::screen_v2,
                   PrivacyMechanism::screen_v3})
        if (to_string(m) == s)
            return m;
    throw Error(Errc::ParseError, "unknown privacy mechanism '" + std::string(s) + "'");
}

std::string_view to_string(RoadClass c)
{
    switch (c) {
    case RoadClass::urban: return "urban";
    case RoadClass::rural: return "rural";
    case RoadClass::highway: return "highway";
    }
    return "?";
}

RoadClass parse_road_class(std::string_view s)
{
    if (s == "urban")
        return RoadClass::urban;
    if (s == "rural")
        return RoadClass::rural;
    if (s == "highway")
        return RoadClass::highway;
    throw Error(Errc::ParseError, "unknown road class '" + std::string(s) + "'");
}

void validate(const TelemetrySample& sample)
{
    auto fail = [&](const std::string& why) {
        throw Error(Errc::InvalidSample, std::string(to_string(sample.kind)) + " for " + sample.vin.str() + ": " + why);
    };
    if (!value_matches_kind(sample.kind, sample.value))
        fail("value type does not match kind");

    if (auto* km = std::get_if<Kilometers>(&sample.value)) {
        if (!std::isfinite(km->value))
            fail("non-finite distance");
        if (sample.kind == DataPointKind::odometer && km->value < 0.0)
            fail("negative odometer");
    } else if (auto* p = std::get_if<GeoPoint>(&sample.value)) {
        if (!(p->lat >= -90.0 && p->lat <= 90.0))
            fail("latitude out of range");
        if (!(p->lon >= -180.0 && p->lon <= 180.0))
            fail("longitude out of range");
    } else if (auto* h = std::get_if<HeadingDeg>(&sample.value)) {
        if (!(h->value >= 0.0 && h->value < 360.0))
            fail("heading out of [0, 360)");
    } else if (auto* l = std::get_if<Liters>(&sample.value)) {
        if (!(l->value >= 0.0) || !std::isfinite(l->value))
            fail("fuel volume must be non-negative");
    } else if (auto* c = std::get_if<Celsius>(&sample.value)) {
        if (!std::isfinite(c->value))
            fail("non-finite temperature");
    } else if (auto* d = std::get_if<CalendarDate>(&sample.value)) {
        if (!d->date.ok())
            fail("invalid date");
    }
}

} // namespace cvp
