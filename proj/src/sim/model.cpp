#include "cvp/sim/model.hpp"

#include "cvp/core/error.hpp"

#include <cmath>

namespace cvp::sim {

namespace {

void require(bool ok, const std::string& what)
{
    if (!ok)
        throw Error(Errc::InvalidConfig, what);
}

bool positive(double v) { return std::isfinite(v) && v > 0; }

} // namespace

void validate(const TripModel& m)
{
    require(positive(m.trips_per_day), "trips_per_day must be positive");
    require(positive(m.trip_length_km_mean), "trip length mean must be positive");
    require(std::isfinite(m.trip_length_km_spread) && m.trip_length_km_spread >= 0, "trip length spread must be >= 0");
    require(m.night_trip_fraction >= 0 && m.night_trip_fraction <= 1, "night_trip_fraction must be in [0, 1]");
    const auto& sp = m.speed_profile;
    require(sp.urban_share >= 0 && sp.rural_share >= 0 && sp.highway_share >= 0, "road shares must be >= 0");
    require(sp.urban_share + sp.rural_share + sp.highway_share > 0, "road shares must not all be zero");
    require(positive(sp.urban_kmh) && positive(sp.rural_kmh) && positive(sp.highway_kmh), "speeds must be positive");
    require(sp.urban_kmh <= 250 && sp.rural_kmh <= 250 && sp.highway_kmh <= 250, "speeds above 250 km/h");
    require(std::isfinite(m.harsh_brake_rate) && m.harsh_brake_rate >= 0, "harsh_brake_rate must be >= 0");
    require(std::isfinite(m.gps_emit_interval_s) && m.gps_emit_interval_s >= 1, "gps_emit_interval must be >= 1 s");
}

Json encode(const TripModel& m)
{
    const auto& sp = m.speed_profile;
    return Json{
        {"trips_per_day", m.trips_per_day},
        {"trip_length_km", {{"mean", m.trip_length_km_mean}, {"spread", m.trip_length_km_spread}}},
        {"night_trip_fraction", m.night_trip_fraction},
        {"speed_profile",
         {{"urban", {{"share", sp.urban_share}, {"kmh", sp.urban_kmh}}},
          {"rural", {{"share", sp.rural_share}, {"kmh", sp.rural_kmh}}},
          {"highway", {{"share", sp.highway_share}, {"kmh", sp.highway_kmh}}}}},
        {"harsh_brake_rate", m.harsh_brake_rate},
        {"gps_emit_interval_s", m.gps_emit_interval_s},
    };
}

TripModel decode_trip_model(const Json& j)
{
    if (!j.is_object())
        throw Error(Errc::ParseError, "trip model must be an object");
    // A string "preset" starts from a named model; explicit fields override it.
    TripModel m = j.contains("preset") ? named_trip_model(j.at("preset").get<std::string>()) : TripModel{};
    try {
        m.trips_per_day = j.value("trips_per_day", m.trips_per_day);
        if (j.contains("trip_length_km")) {
            const Json& len = j.at("trip_length_km");
            m.trip_length_km_mean = len.value("mean", m.trip_length_km_mean);
            m.trip_length_km_spread = len.value("spread", m.trip_length_km_spread);
        }
        m.night_trip_fraction = j.value("night_trip_fraction", m.night_trip_fraction);
        if (j.contains("speed_profile")) {
            const Json& sp = j.at("speed_profile");
            auto read = [&](const char* key, double& share, double& kmh) {
                if (!sp.contains(key))
                    return;
                share = sp.at(key).value("share", share);
                kmh = sp.at(key).value("kmh", kmh);
            };
            read("urban", m.speed_profile.urban_share, m.speed_profile.urban_kmh);
            read("rural", m.speed_profile.rural_share, m.speed_profile.rural_kmh);
            read("highway", m.speed_profile.highway_share, m.speed_profile.highway_kmh);
        }
        m.harsh_brake_rate = j.value("harsh_brake_rate", m.harsh_brake_rate);
        m.gps_emit_interval_s = j.value("gps_emit_interval_s", m.gps_emit_interval_s);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
    validate(m);
    return m;
}

Json encode(const FaultPlan& f)
{
    Json outages = Json::array();
    for (const auto& w : f.api_outages)
        outages.push_back({{"from", w.from}, {"to", w.to}});
    Json events = Json::array();
    for (const auto& e : f.events)
        events.push_back({{"at", e.at}, {"kind", e.kind}});
    return Json{{"transmission_test_failures", f.transmission_test_failures},
                {"api_outages", outages},
                {"events", events}};
}

FaultPlan decode_fault_plan(const Json& j)
{
    FaultPlan f;
    try {
        f.transmission_test_failures = j.value("transmission_test_failures", 0);
        for (const auto& w : j.value("api_outages", Json::array()))
            f.api_outages.push_back({w.at("from").get<Timestamp>(), w.at("to").get<Timestamp>()});
        for (const auto& e : j.value("events", Json::array()))
            f.events.push_back({e.at("at").get<Timestamp>(), e.at("kind").get<NotificationKind>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
    if (f.transmission_test_failures < 0)
        throw Error(Errc::InvalidConfig, "transmission_test_failures must be >= 0");
    for (const auto& w : f.api_outages)
        if (w.to <= w.from)
            throw Error(Errc::InvalidConfig, "empty outage window");
    return f;
}

Json encode(const SimVehicleConfig& c)
{
    return Json{
        {"vin", c.vin},
        {"profile", c.profile},
        {"home", c.home},
        {"trip_model", encode(c.trip_model)},
        {"privacy_mechanism", to_string(c.privacy_mechanism)},
        {"fault_plan", encode(c.fault_plan)},
        {"time_zone", c.time_zone},
        {"initial_odometer_km", c.initial_odometer_km},
    };
}

SimVehicleConfig decode_vehicle_config(const Json& j)
{
    try {
        SimVehicleConfig c(j.at("vin").get<Vin>(), j.at("profile").get<BrandId>());
        if (j.contains("home"))
            c.home = j.at("home").get<GeoPoint>();
        if (j.contains("trip_model")) {
            const Json& m = j.at("trip_model");
            c.trip_model = m.is_string() ? named_trip_model(m.get<std::string>()) : decode_trip_model(m);
        }
        if (j.contains("privacy_mechanism"))
            c.privacy_mechanism = parse_privacy_mechanism(j.at("privacy_mechanism").get<std::string>());
        if (j.contains("fault_plan"))
            c.fault_plan = decode_fault_plan(j.at("fault_plan"));
        c.time_zone = j.value("time_zone", c.time_zone);
        c.initial_odometer_km = j.value("initial_odometer_km", c.initial_odometer_km);
        if (!(c.initial_odometer_km >= 0))
            throw Error(Errc::InvalidConfig, "initial odometer must be >= 0");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

TripModel named_trip_model(std::string_view name)
{
    TripModel m;
    if (name == "commuter" || name == "default") {
        return m;
    }
    if (name == "bmw-116d") {
        // short urban hops a few times a week
        m.trips_per_day = 0.55;
        m.trip_length_km_mean = 4.5;
        m.trip_length_km_spread = 2.0;
        m.night_trip_fraction = 0.08;
        m.speed_profile = {0.75, 0.2, 0.05, 40, 75, 115};
        return m;
    }
    if (name == "bmw-x5") {
        m.trips_per_day = 0.8;
        m.trip_length_km_mean = 7.0;
        m.trip_length_km_spread = 3.0;
        m.night_trip_fraction = 0.1;
        m.speed_profile = {0.6, 0.3, 0.1, 40, 75, 115};
        return m;
    }
    if (name == "mercedes-gla" || name == "mercedes-gle") {
        m.trips_per_day = 1.6;
        m.trip_length_km_mean = 15.0;
        m.trip_length_km_spread = 6.0;
        m.night_trip_fraction = 0.12;
        return m;
    }
    if (name == "analytics") {
        m.trips_per_day = 3.0;
        m.trip_length_km_mean = 12.0;
        m.trip_length_km_spread = 4.0;
        m.night_trip_fraction = 0.15;
        m.harsh_brake_rate = 4.0;
        m.gps_emit_interval_s = 1;
        return m;
    }
    throw Error(Errc::InvalidConfig, "unknown trip model '" + std::string(name) + "'");
}

FaultPlan named_fault_plan(std::string_view name, Timestamp start)
{
    FaultPlan f;
    if (name == "none")
        return f;
    auto day = [&](int d) { return floor<std::chrono::days>(start) + std::chrono::days{d}; };
    if (name == "mercedes-gla") {
        // 25 days of upstream failure in a 63-day run
        f.api_outages.push_back({day(20), day(45)});
        return f;
    }
    if (name == "mercedes-gle") {
        f.api_outages.push_back({day(7), day(28)});
        return f;
    }
    throw Error(Errc::InvalidConfig, "unknown fault plan '" + std::string(name) + "'");
}

} // namespace cvp::sim
