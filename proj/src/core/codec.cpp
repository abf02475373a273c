#include "cvp/core/codec.hpp"

#include "cvp/core/error.hpp"

namespace cvp {

Json parse_json(std::string_view text)
{
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

Json encode_value(DataPointKind kind, const SampleValue& value)
{
    if (!value_matches_kind(kind, value))
        throw Error(Errc::InvalidSample, "value type does not match " + std::string(to_string(kind)));
    return std::visit(
        [](const auto& v) -> Json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, GeoPoint>)
                return Json(v);
            else if constexpr (std::is_same_v<T, LockState>)
                return v.locked ? "locked" : "unlocked";
            else if constexpr (std::is_same_v<T, HoodState>)
                return v.open ? "open" : "closed";
            else if constexpr (std::is_same_v<T, CalendarDate>)
                return format_date(v.date);
            else if constexpr (std::is_same_v<T, OpaqueText>)
                return v.text;
            else
                return v.value;
        },
        value);
}

SampleValue decode_value(DataPointKind kind, const Json& j)
{
    auto number = [&] {
        if (!j.is_number())
            throw Error(Errc::ParseError, std::string(to_string(kind)) + " expects a number");
        return j.get<double>();
    };
    auto text = [&] {
        if (!j.is_string())
            throw Error(Errc::ParseError, std::string(to_string(kind)) + " expects a string");
        return j.get<std::string>();
    };
    switch (kind) {
    case DataPointKind::odometer:
    case DataPointKind::distance_to_next_maintenance:
        return Kilometers{number()};
    case DataPointKind::fuel_volume: return Liters{number()};
    case DataPointKind::heading: return HeadingDeg{number()};
    case DataPointKind::outside_temperature: return Celsius{number()};
    case DataPointKind::gps_coordinates: return decode<GeoPoint>(j);
    case DataPointKind::doors_lock_state: {
        auto s = text();
        if (s != "locked" && s != "unlocked")
            throw Error(Errc::ParseError, "lock state must be locked|unlocked");
        return LockState{s == "locked"};
    }
    case DataPointKind::hood_position: {
        auto s = text();
        if (s != "open" && s != "closed")
            throw Error(Errc::ParseError, "hood position must be open|closed");
        return HoodState{s == "open"};
    }
    case DataPointKind::brake_fluid_change_date: return CalendarDate{parse_date(text())};
    case DataPointKind::acceleration_evaluation:
    case DataPointKind::driving_style:
        return OpaqueText{text()};
    }
    throw Error(Errc::ParseError, "unhandled kind");
}

ProfileRegistry load_profiles(const Json& j)
{
    ProfileRegistry r;
    if (!j.contains("profiles") || !j["profiles"].is_array())
        throw Error(Errc::ParseError, "profiles file needs a 'profiles' array");
    for (const auto& p : j["profiles"])
        r.add(decode<OemProfile>(p));
    return r;
}

Json dump_profiles(const ProfileRegistry& registry)
{
    Json arr = Json::array();
    for (const auto& b : registry.brands())
        arr.push_back(registry.profile_for(b));
    return Json{{"profiles", arr}};
}

} // namespace cvp

namespace nlohmann {

using cvp::Error;
using cvp::Errc;

void adl_serializer<cvp::Vin>::to_json(json& j, const cvp::Vin& v)
{
    j = v.str();
}

cvp::Vin adl_serializer<cvp::Vin>::from_json(const json& j)
{
    return cvp::Vin::parse(j.get<std::string>());
}

void adl_serializer<cvp::Timestamp>::to_json(json& j, const cvp::Timestamp& t)
{
    j = cvp::format_rfc3339(t);
}

cvp::Timestamp adl_serializer<cvp::Timestamp>::from_json(const json& j)
{
    return cvp::parse_rfc3339(j.get<std::string>());
}

void adl_serializer<cvp::BrandId>::to_json(json& j, const cvp::BrandId& b)
{
    j = b.value;
}

cvp::BrandId adl_serializer<cvp::BrandId>::from_json(const json& j)
{
    return cvp::BrandId{j.get<std::string>()};
}

void adl_serializer<cvp::DataPointKind>::to_json(json& j, cvp::DataPointKind k)
{
    j = std::string(cvp::to_string(k));
}

cvp::DataPointKind adl_serializer<cvp::DataPointKind>::from_json(const json& j)
{
    return cvp::parse_data_point_kind(j.get<std::string>());
}

void adl_serializer<cvp::NotificationKind>::to_json(json& j, cvp::NotificationKind k)
{
    j = std::string(cvp::to_string(k));
}

cvp::NotificationKind adl_serializer<cvp::NotificationKind>::from_json(const json& j)
{
    return cvp::parse_notification_kind(j.get<std::string>());
}

void adl_serializer<cvp::GeoPoint>::to_json(json& j, const cvp::GeoPoint& p)
{
    j = json{{"lat", p.lat}, {"lon", p.lon}};
}

cvp::GeoPoint adl_serializer<cvp::GeoPoint>::from_json(const json& j)
{
    return cvp::GeoPoint{j.at("lat").get<double>(), j.at("lon").get<double>()};
}

void adl_serializer<cvp::TelemetrySample>::to_json(json& j, const cvp::TelemetrySample& s)
{
    j = json{{"vin", s.vin},
             {"kind", s.kind},
             {"value", cvp::encode_value(s.kind, s.value)},
             {"observed_at", s.observed_at},
             {"source", std::string(cvp::to_string(s.source))}};
}

cvp::TelemetrySample adl_serializer<cvp::TelemetrySample>::from_json(const json& j)
{
    auto kind = j.at("kind").get<cvp::DataPointKind>();
    cvp::TelemetrySample s{j.at("vin").get<cvp::Vin>(), kind, cvp::decode_value(kind, j.at("value")),
                           j.at("observed_at").get<cvp::Timestamp>(),
                           cvp::parse_sample_source(j.at("source").get<std::string>())};
    cvp::validate(s);
    return s;
}

void adl_serializer<cvp::NotificationEvent>::to_json(json& j, const cvp::NotificationEvent& e)
{
    j = json{{"vin", e.vin}, {"kind", e.kind}, {"emitted_at", e.emitted_at}, {"delivery_id", e.delivery_id}};
}

cvp::NotificationEvent adl_serializer<cvp::NotificationEvent>::from_json(const json& j)
{
    return cvp::NotificationEvent{j.at("vin").get<cvp::Vin>(), j.at("kind").get<cvp::NotificationKind>(),
                                  j.at("emitted_at").get<cvp::Timestamp>(),
                                  j.at("delivery_id").get<std::string>()};
}

void adl_serializer<cvp::Vehicle>::to_json(json& j, const cvp::Vehicle& v)
{
    j = json{{"vin", v.vin},
             {"brand", v.brand},
             {"model", v.model},
             {"production_year", v.production_year},
             {"purchase_country", v.purchase_country},
             {"fidelity_program_member", v.fidelity_program_member},
             {"time_zone", v.time_zone}};
}

cvp::Vehicle adl_serializer<cvp::Vehicle>::from_json(const json& j)
{
    cvp::Vehicle v{j.at("vin").get<cvp::Vin>(), j.at("brand").get<cvp::BrandId>(), {}, 0, {}, false};
    v.model = j.at("model").get<std::string>();
    v.production_year = j.at("production_year").get<int>();
    v.purchase_country = j.at("purchase_country").get<std::string>();
    v.fidelity_program_member = j.value("fidelity_program_member", false);
    v.time_zone = j.value("time_zone", std::string("Europe/Luxembourg"));
    return v;
}

void adl_serializer<cvp::Driver>::to_json(json& j, const cvp::Driver& d)
{
    j = json{{"email", d.email}, {"name", d.name}};
}

cvp::Driver adl_serializer<cvp::Driver>::from_json(const json& j)
{
    return cvp::Driver{j.at("email").get<std::string>(), j.value("name", std::string())};
}

void adl_serializer<cvp::QuotaSpec>::to_json(json& j, const cvp::QuotaSpec& q)
{
    j = json{{"max", q.max_requests},
             {"window_seconds", std::chrono::duration_cast<cvp::Seconds>(q.window).count()},
             {"mode", q.mode == cvp::QuotaMode::sliding ? "sliding" : "calendar_day"}};
}

cvp::QuotaSpec adl_serializer<cvp::QuotaSpec>::from_json(const json& j)
{
    cvp::QuotaSpec q;
    q.max_requests = j.at("max").get<int>();
    q.window = cvp::Seconds{j.at("window_seconds").get<std::int64_t>()};
    auto mode = j.value("mode", std::string("sliding"));
    if (mode == "sliding")
        q.mode = cvp::QuotaMode::sliding;
    else if (mode == "calendar_day")
        q.mode = cvp::QuotaMode::calendar_day;
    else
        throw Error(Errc::ParseError, "unknown quota mode '" + mode + "'");
    return q;
}

void adl_serializer<cvp::OemProfile>::to_json(json& j, const cvp::OemProfile& p)
{
    j = json{{"brand", p.brand},
             {"display_name", p.display_name},
             {"notification_kinds", p.notification_kinds},
             {"request_kinds", p.request_kinds},
             {"quota", p.quota},
             {"consent_variant", std::string(cvp::to_string(p.consent_variant))},
             {"monthly_data_cost_eur", p.monthly_data_cost_eur}};
}

cvp::OemProfile adl_serializer<cvp::OemProfile>::from_json(const json& j)
{
    cvp::OemProfile p;
    p.brand = j.at("brand").get<cvp::BrandId>();
    p.display_name = j.value("display_name", p.brand.value);
    for (const auto& k : j.at("notification_kinds"))
        p.notification_kinds.insert(k.get<cvp::NotificationKind>());
    for (const auto& k : j.at("request_kinds"))
        p.request_kinds.insert(k.get<cvp::DataPointKind>());
    p.quota = j.at("quota").get<cvp::QuotaSpec>();
    p.consent_variant = cvp::parse_consent_variant(j.at("consent_variant").get<std::string>());
    p.monthly_data_cost_eur = j.at("monthly_data_cost_eur").get<double>();
    return p;
}

} // namespace nlohmann
