#pragma once

#include "cvp/core/kinds.hpp"
#include "cvp/core/time.hpp"
#include "cvp/core/vin.hpp"

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <variant>

namespace cvp {

struct BrandId {
    std::string value;

    auto operator<=>(const BrandId&) const = default;
};

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool operator==(const GeoPoint&) const = default;
};

// One strong type per physical unit; the kind of a sample decides which
// alternative is legal (see expects_value_type).
struct Kilometers {
    double value = 0.0;
    bool operator==(const Kilometers&) const = default;
};
struct Liters {
    double value = 0.0;
    bool operator==(const Liters&) const = default;
};
struct HeadingDeg {
    double value = 0.0;
    bool operator==(const HeadingDeg&) const = default;
};
struct Celsius {
    double value = 0.0;
    bool operator==(const Celsius&) const = default;
};
struct LockState {
    bool locked = true;
    bool operator==(const LockState&) const = default;
};
struct HoodState {
    bool open = false;
    bool operator==(const HoodState&) const = default;
};
struct CalendarDate {
    std::chrono::year_month_day date;
    bool operator==(const CalendarDate&) const = default;
};
// acceleration_evaluation and driving_style are passed through uninterpreted.
struct OpaqueText {
    std::string text;
    bool operator==(const OpaqueText&) const = default;
};

using SampleValue =
    std::variant<Kilometers, Liters, HeadingDeg, Celsius, GeoPoint, LockState, HoodState, CalendarDate, OpaqueText>;

/// True when `value` holds the alternative `kind` requires.
bool value_matches_kind(DataPointKind kind, const SampleValue& value);

enum class SampleSource { request, notification };

std::string_view to_string(SampleSource s);
SampleSource parse_sample_source(std::string_view s);

struct TelemetrySample {
    Vin vin;
    DataPointKind kind;
    SampleValue value;
    Timestamp observed_at;
    SampleSource source = SampleSource::request;

    bool operator==(const TelemetrySample&) const = default;
};

/// Checks the value type against the kind and the per-kind ranges
/// (lat/lon bounds, heading in [0, 360), non-negative odometer).
/// Throws Error{InvalidSample}.
void validate(const TelemetrySample& sample);

struct NotificationEvent {
    Vin vin;
    NotificationKind kind;
    Timestamp emitted_at;
    std::string delivery_id;

    bool operator==(const NotificationEvent&) const = default;
};

// How the driver unlocks data sharing in the car (Stellantis-like consent).
enum class PrivacyMechanism { double_push, screen_v1, screen_v2, screen_v3 };

std::string_view to_string(PrivacyMechanism m);
PrivacyMechanism parse_privacy_mechanism(std::string_view s);

enum class RoadClass { urban, rural, highway };

std::string_view to_string(RoadClass c);
RoadClass parse_road_class(std::string_view s);

struct Vehicle {
    Vin vin;
    BrandId brand;
    std::string model;
    int production_year = 0;
    std::string purchase_country;
    bool fidelity_program_member = false;
    std::string time_zone = "Europe/Luxembourg";

    bool operator==(const Vehicle&) const = default;
};

struct Driver {
    std::string email;
    std::string name;

    bool operator==(const Driver&) const = default;
};

} // namespace cvp
