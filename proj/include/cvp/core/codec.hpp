#pragma once

// Canonical JSON encoding of the domain types: snake_case field names,
// RFC 3339 UTC timestamps. Decoding failures throw Error{ParseError}.

#include "cvp/core/error.hpp"
#include "cvp/core/profile.hpp"
#include "cvp/core/types.hpp"

#include <nlohmann/json.hpp>

namespace cvp {

using Json = nlohmann::json;

Json encode_value(DataPointKind kind, const SampleValue& value);
SampleValue decode_value(DataPointKind kind, const Json& j);

/// Parse helper that turns nlohmann exceptions into Error{ParseError}.
Json parse_json(std::string_view text);

template <typename T>
T decode(const Json& j);

template <typename T>
T decode_text(std::string_view text)
{
    return decode<T>(parse_json(text));
}

} // namespace cvp

namespace nlohmann {

template <>
struct adl_serializer<cvp::Vin> {
    static void to_json(json& j, const cvp::Vin& v);
    static cvp::Vin from_json(const json& j);
};

template <>
struct adl_serializer<cvp::Timestamp> {
    static void to_json(json& j, const cvp::Timestamp& t);
    static cvp::Timestamp from_json(const json& j);
};

template <>
struct adl_serializer<cvp::BrandId> {
    static void to_json(json& j, const cvp::BrandId& b);
    static cvp::BrandId from_json(const json& j);
};

template <>
struct adl_serializer<cvp::DataPointKind> {
    static void to_json(json& j, cvp::DataPointKind k);
    static cvp::DataPointKind from_json(const json& j);
};

template <>
struct adl_serializer<cvp::NotificationKind> {
    static void to_json(json& j, cvp::NotificationKind k);
    static cvp::NotificationKind from_json(const json& j);
};

template <>
struct adl_serializer<cvp::GeoPoint> {
    static void to_json(json& j, const cvp::GeoPoint& p);
    static cvp::GeoPoint from_json(const json& j);
};

template <>
struct adl_serializer<cvp::TelemetrySample> {
    static void to_json(json& j, const cvp::TelemetrySample& s);
    static cvp::TelemetrySample from_json(const json& j);
};

template <>
struct adl_serializer<cvp::NotificationEvent> {
    static void to_json(json& j, const cvp::NotificationEvent& e);
    static cvp::NotificationEvent from_json(const json& j);
};

template <>
struct adl_serializer<cvp::Vehicle> {
    static void to_json(json& j, const cvp::Vehicle& v);
    static cvp::Vehicle from_json(const json& j);
};

template <>
struct adl_serializer<cvp::Driver> {
    static void to_json(json& j, const cvp::Driver& d);
    static cvp::Driver from_json(const json& j);
};

template <>
struct adl_serializer<cvp::QuotaSpec> {
    static void to_json(json& j, const cvp::QuotaSpec& q);
    static cvp::QuotaSpec from_json(const json& j);
};

template <>
struct adl_serializer<cvp::OemProfile> {
    static void to_json(json& j, const cvp::OemProfile& p);
    static cvp::OemProfile from_json(const json& j);
};

} // namespace nlohmann

namespace cvp {

template <typename T>
T decode(const Json& j)
{
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

/// Profiles file: {"profiles": [ ... ]}. Each entry is validated.
ProfileRegistry load_profiles(const Json& j);
Json dump_profiles(const ProfileRegistry& registry);

} // namespace cvp
