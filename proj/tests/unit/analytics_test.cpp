#include <catch2/catch_amalgamated.hpp>

#include "cvp/analytics/report.hpp"
#include "cvp/analytics/speed_map.hpp"
#include "cvp/analytics/track.hpp"
#include "cvp/core/geo.hpp"
#include "cvp/ingest/poll_scheduler.hpp"
#include "cvp/sim/model.hpp"
#include "cvp/sim/trace.hpp"
#include "cvp/sim/vehicle.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace cvp;
using namespace cvp::analytics;
using namespace std::chrono;
using Catch::Approx;

namespace {

const Timestamp kStart = sys_days{2022y / March / 1} + 0h;
const Vin kVin = Vin::parse("WBAXY000000003002");
const TimeZone kLux = TimeZone::named("Europe/Luxembourg");
constexpr double kKmPerDegLat = geo::kEarthRadiusKm * std::numbers::pi / 180.0;

Errc code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a cvp::Error");
    return Errc::ParseError;
}

// Straight northward run at a constant speed, one point per `step`.
Track northward(Timestamp t0, GeoPoint from, double kmh, Millis duration, Millis step = 1s)
{
    Track track;
    for (Millis t{0}; t <= duration; t += step) {
        double km = kmh * std::chrono::duration<double, std::ratio<3600>>(t).count();
        track.push_back({t0 + t, GeoPoint{from.lat + km / kKmPerDegLat, from.lon}});
    }
    return track;
}

Track track_of(const sim::Trip& trip)
{
    Track t;
    for (const auto& m : trip.samples)
        t.push_back({m.t, m.pos});
    return t;
}

Track track_of(const sim::Trace& trace)
{
    Track t;
    for (const auto& trip : trace)
        for (const auto& m : trip.samples)
            t.push_back({m.t, m.pos});
    return t;
}

SpeedSegment segment(Timestamp from, Millis length, double kmh)
{
    SpeedSegment s;
    s.from.t = from;
    s.to.t = from + length;
    s.kmh = kmh;
    return s;
}

void store_track(storage::SeriesStore& store, const Vin& vin, const Track& track)
{
    std::vector<TelemetrySample> samples;
    for (const auto& p : track)
        samples.push_back({vin, DataPointKind::gps_coordinates, p.pos, p.t, SampleSource::request});
    store.append_samples(samples);
}

sim::SimVehicleConfig analytics_config(double night_fraction = 0.15)
{
    sim::SimVehicleConfig c(kVin, BrandId{"bmw"});
    c.trip_model = sim::named_trip_model("analytics");
    c.trip_model.night_trip_fraction = night_fraction;
    return c;
}

} // namespace

TEST_CASE("distance is the sum of great-circle legs", "[analytics][distance]")
{
    GeoPoint a{49.6000, 6.1200}, b{49.6090, 6.1200};
    // Along a meridian the great circle is the arc: delta-lat in radians times R.
    CHECK(compute_distance({{kStart, a}, {kStart + 60s, b}}) == Approx(0.009 * kKmPerDegLat).epsilon(1e-9));
    CHECK(compute_distance({{kStart, a}, {kStart + 60s, b}}) == Approx(1.0007).margin(5e-4));
    CHECK(compute_distance({{kStart, a}, {kStart + 1s, a}}) == 0.0);
    CHECK(compute_distance({}) == 0.0);
    CHECK(code_of([&] { compute_distance({{kStart + 1s, a}, {kStart, b}}); }) == Errc::UnorderedPoints);

    // A scripted 12 km straight trip.
    auto trip = sim::scripted_trip(0, kStart + 12h, a, {{0, 2, 10}, {0, 0, 590}, {0, -2, 10}}, kLux);
    CHECK(trip.distance_km == Approx(12.0).epsilon(1e-9));
    CHECK(compute_distance(track_of(trip)) == Approx(12.0).epsilon(0.01));
}

TEST_CASE("distance is additive over any split", "[analytics][distance][property]")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> step(-0.01, 0.01);
    for (int round = 0; round < 200; ++round) {
        Track t{{kStart, {49.6, 6.1}}};
        int n = 2 + static_cast<int>(rng() % 200);
        for (int i = 1; i < n; ++i)
            t.push_back({t.back().t + 1s, {t.back().pos.lat + step(rng), t.back().pos.lon + step(rng)}});
        auto k = 1 + rng() % (t.size() - 1);
        Track head(t.begin(), t.begin() + static_cast<long>(k) + 1), tail(t.begin() + static_cast<long>(k), t.end());
        double whole = compute_distance(t);
        CHECK(std::abs(whole - compute_distance(head) - compute_distance(tail)) <= 1e-9 * std::max(whole, 1e-12));
    }
}

TEST_CASE("speed estimates", "[analytics][speed]")
{
    GeoPoint a{49.6, 6.12};
    GeoPoint b{49.6 + 0.1 / kKmPerDegLat, 6.12}; // 100 m north
    auto s = estimate_speeds({{kStart, a}, {kStart + 10s, b}});
    REQUIRE(s.size() == 1);
    CHECK(s[0].kmh == Approx(0.1 / (10.0 / 3600.0)));
    CHECK(s[0].kmh == Approx(36.0));
    CHECK(estimate_speeds({{kStart, a}, {kStart + 10s, a}})[0].kmh == 0.0);
    CHECK(code_of([&] { estimate_speeds({{kStart, a}, {kStart, b}}); }) == Errc::ZeroTimeDelta);
    CHECK(code_of([&] { estimate_speeds({{kStart + 1s, a}, {kStart, b}}); }) == Errc::UnorderedPoints);
    // Legs across an idle gap are left out.
    CHECK(estimate_speeds({{kStart, a}, {kStart + 10s, b}, {kStart + 1h, a}}).size() == 1);
}

TEST_CASE("harsh brakes from the speed series", "[analytics][brakes]")
{
    // 60 -> 20 km/h with segment midpoints 2 s apart: (40 / 3.6) / 2 = 5.56 m/s^2.
    std::vector<SpeedSegment> hard{segment(kStart, 2s, 60), segment(kStart + 2s, 2s, 20)};
    auto events = detect_harsh_brakes(hard);
    REQUIRE(events.size() == 1);
    CHECK(events[0].peak_mps2 == Approx(40 / 3.6 / 2));
    CHECK(events[0].from_kmh == 60);
    CHECK(events[0].to_kmh == 20);

    std::vector<SpeedSegment> gentle{segment(kStart, 5s, 50), segment(kStart + 5s, 5s, 40)}; // 0.56 m/s^2
    CHECK(detect_harsh_brakes(gentle).empty());
    std::vector<SpeedSegment> steady{segment(kStart, 1s, 50), segment(kStart + 1s, 1s, 50), segment(kStart + 2s, 1s, 50)};
    CHECK(detect_harsh_brakes(steady).empty());

    // One braking episode over several qualifying pairs is one event.
    std::vector<SpeedSegment> long_brake;
    double v = 100;
    for (int i = 0; i < 6; ++i, v -= 18)
        long_brake.push_back(segment(kStart + seconds{i}, 1s, v));
    CHECK(detect_harsh_brakes(long_brake).size() == 1);

    // Non-contiguous segments are not compared.
    std::vector<SpeedSegment> gap{segment(kStart, 1s, 80), segment(kStart + 10s, 1s, 10)};
    CHECK(detect_harsh_brakes(gap).empty());
}

TEST_CASE("raising the threshold never adds harsh brakes", "[analytics][brakes][property]")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dv(-25, 25);
    for (int round = 0; round < 300; ++round) {
        std::vector<SpeedSegment> series;
        double v = 50;
        for (int i = 0; i < 60; ++i) {
            series.push_back(segment(kStart + seconds{i}, 1s, v));
            v = std::clamp(v + dv(rng), 0.0, 150.0);
        }
        std::size_t previous = SIZE_MAX;
        for (double threshold = 0.5; threshold <= 8.0; threshold += 0.25) {
            auto n = detect_harsh_brakes(series, threshold).size();
            CHECK(n <= previous);
            previous = n;
        }
    }
}

TEST_CASE("trip segmentation", "[analytics][segmentation]")
{
    GeoPoint home{49.6, 6.12};
    SECTION("two clusters two hours apart")
    {
        auto first = northward(kStart, home, 40, 5min);
        auto second = northward(kStart + 2h, first.back().pos, 40, 5min);
        Track all = first;
        all.insert(all.end(), second.begin(), second.end());
        auto trips = segment_trips(all);
        REQUIRE(trips.size() == 2);
        CHECK(trips[0] == first);
        CHECK(trips[1] == second);
    }
    SECTION("single point and short hops are not trips")
    {
        CHECK(segment_trips({{kStart, home}}).empty());
        CHECK(segment_trips(northward(kStart, home, 10, 20s)).empty()); // 56 m
    }
    SECTION("a long dwell without a gap splits the series")
    {
        auto drive = northward(kStart, home, 40, 5min, 30s);
        Track all = drive;
        for (int i = 1; i <= 20; ++i) // parked, reporting every 30 s, jitter under 50 m
            all.push_back({drive.back().t + seconds{30 * i}, {drive.back().pos.lat + (i % 2) * 1e-4, drive.back().pos.lon}});
        auto back = northward(all.back().t + 30s, all.back().pos, 40, 5min, 30s);
        all.insert(all.end(), back.begin(), back.end());
        auto trips = segment_trips(all);
        REQUIRE(trips.size() == 2);
        CHECK(trips[0].back().t == drive.back().t);
        CHECK(trips[1].back().t == back.back().t);
        // A short stop at a light is not a split.
        Track light = northward(kStart, home, 40, 2min);
        for (int i = 1; i <= 60; ++i)
            light.push_back({light.back().t + 1s, light.back().pos});
        auto on = northward(light.back().t + 1s, light.back().pos, 40, 2min);
        light.insert(light.end(), on.begin(), on.end());
        CHECK(segment_trips(light).size() == 1);
    }
    SECTION("generator traces: trip count equals ground truth")
    {
        auto c = analytics_config();
        auto trace = sim::generate_trace(c, kStart, 5, 77);
        CHECK(segment_trips(track_of(trace)).size() == trace.size());
    }
}

TEST_CASE("analytics reproduce generator ground truth", "[analytics][oracle]")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto c = analytics_config(0.3);
        auto trace = sim::generate_trace(c, kStart, 7, seed);
        auto trips = segment_trips(track_of(trace));
        REQUIRE(trips.size() == trace.size());
        double km = 0, truth_km = 0, night = 0, truth_night = 0;
        std::size_t brakes = 0, truth_brakes = 0;
        for (std::size_t i = 0; i < trips.size(); ++i) {
            km += compute_distance(trips[i]);
            truth_km += trace[i].distance_km;
            night += night_km(trips[i], kLux);
            truth_night += trace[i].night_km;
            brakes += detect_harsh_brakes(estimate_speeds(trips[i])).size();
            truth_brakes += trace[i].harsh_brakes.size();
            CHECK(detect_harsh_brakes(estimate_speeds(trips[i])).size() == trace[i].harsh_brakes.size());
        }
        CHECK(km == Approx(truth_km).epsilon(0.01));
        CHECK(night == Approx(truth_night).epsilon(0.05).margin(0.05));
        CHECK(brakes == truth_brakes);
    }
}

TEST_CASE("night distance by leg midpoint", "[analytics][night]")
{
    auto day = year_month_day{2022y / March / 10};
    GeoPoint home{49.6, 6.12};
    auto night_trip = northward(kLux.at(day, 2h), home, 40, 30min);
    CHECK(night_km(night_trip, kLux) == Approx(compute_distance(night_trip)).epsilon(1e-12));

    auto evening = northward(kLux.at(day, 21h + 30min), home, 40, 1h);
    CHECK(night_km(evening, kLux) == Approx(compute_distance(evening) / 2).epsilon(0.01));

    auto noon = northward(kLux.at(day, 12h), home, 40, 30min);
    CHECK(night_km(noon, kLux) == 0.0);

    // night + day partitions the distance for any trip.
    auto day_window = NightWindow{5h, 22h};
    for (const auto& t : {night_trip, evening, noon})
        CHECK(night_km(t, kLux) + night_km(t, kLux, day_window) == Approx(compute_distance(t)).epsilon(1e-12));
}

TEST_CASE("speed limit map format", "[analytics][map]")
{
    std::istringstream in(R"(# test map
segment main urban 50 49.600000,6.120000 49.610000,6.120000

segment ring rural 90 49.600000,6.130000 49.600000,6.140000 49.605000,6.150000
)");
    auto map = parse_speed_map(in);
    REQUIRE(map.segments().size() == 2);
    CHECK(map.segments()[1].polyline.size() == 3);
    CHECK(map.segments()[1].road_class == RoadClass::rural);
    std::istringstream again(format_speed_map(map));
    CHECK(format_speed_map(parse_speed_map(again)) == format_speed_map(map));

    auto road = map.road_at({49.605, 6.1202}, 0.03); // ~14 m east of "main"
    REQUIRE(road);
    CHECK(road->segment_id == "main");
    CHECK(road->limit_kmh == 50);
    CHECK_FALSE(map.road_at({49.605, 6.1250}, 0.03));

    auto parse = [](const std::string& text) {
        std::istringstream s(text);
        return parse_speed_map(s);
    };
    CHECK(code_of([&] { parse("segment a urban 150 49.6,6.1 49.7,6.1\n"); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { parse("segment a urban 50 49.6,6.1\n"); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { parse("segment a urban 50 49.6,6.1 49.6,6.1\n"); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { parse("segment a alley 50 49.6,6.1 49.7,6.1\n"); }) == Errc::ParseError);
    CHECK(code_of([&] { parse("road a urban 50 49.6,6.1 49.7,6.1\n"); }) == Errc::ParseError);
    CHECK(code_of([&] { parse("segment a urban 50 49.6;6.1 49.7,6.1\n"); }) == Errc::ParseError);
}

TEST_CASE("overspeed against the speed limit map", "[analytics][overspeed]")
{
    GeoPoint a{49.6, 6.12};
    SpeedLimitMap map;
    map.add({"fifty", RoadClass::urban, 50, {a, {a.lat + 1.0 / kKmPerDegLat, a.lon}}});

    auto fast = northward(kStart, a, 60, 30s); // 0.5 km at 60 km/h
    auto r = compute_overspeed(fast, map);
    CHECK(r.overspeed_km == Approx(0.5).margin(1e-6));
    CHECK(r.uncovered_km == 0.0);
    CHECK(r.by_class.at(RoadClass::urban).km == Approx(0.5).margin(1e-6));

    auto slow = northward(kStart, a, 45, 40s);
    CHECK(compute_overspeed(slow, map).overspeed_km == 0.0);

    // Within the tolerance.
    CHECK(compute_overspeed(northward(kStart, a, 52.5, 30s), map).overspeed_km == 0.0);

    auto off_map = northward(kStart, {49.7, 6.3}, 90, 60s);
    auto o = compute_overspeed(off_map, map);
    CHECK(o.overspeed_km == 0.0);
    CHECK(o.uncovered_km == Approx(compute_distance(off_map)));
    CHECK(code_of([&] { compute_overspeed(fast, SpeedLimitMap{}); }) == Errc::EmptyMap);
}

TEST_CASE("overspeed never exceeds the covered distance", "[analytics][overspeed][property]")
{
    std::mt19937_64 rng(9);
    SpeedLimitMap map;
    map.add({"a", RoadClass::urban, 30, {{49.60, 6.10}, {49.62, 6.10}}});
    map.add({"b", RoadClass::highway, 120, {{49.60, 6.10}, {49.60, 6.14}}});
    for (int round = 0; round < 200; ++round) {
        Track t{{kStart, {49.60 + (rng() % 100) * 2e-4, 6.10 + (rng() % 100) * 2e-4}}};
        for (int i = 0; i < 50; ++i)
            t.push_back({t.back().t + seconds{1 + static_cast<int>(rng() % 5)},
                         {t.back().pos.lat + ((rng() % 21) - 10.0) * 2e-5, t.back().pos.lon + ((rng() % 21) - 10.0) * 2e-5}});
        auto r = compute_overspeed(t, map);
        CHECK(r.overspeed_km <= r.distance_km - r.uncovered_km + 1e-12);
        CHECK(r.overspeed_km >= 0);
    }
}

TEST_CASE("risk features", "[analytics][risk]")
{
    storage::MemorySeriesStore store;
    auto c = analytics_config(0.2);
    c.trip_model.gps_emit_interval_s = 30;
    auto trace = sim::generate_trace(c, kStart, 30, 4);
    store_track(store, kVin, track_of(trace));
    storage::TimeRange month{kStart, kStart + days{30}};

    auto r = build_risk_features(store, kVin, month, kLux, nullptr);
    CHECK(r.source == FeatureSource::gps_trips);
    auto in_month = std::count_if(trace.begin(), trace.end(), [&](const sim::Trip& t) { return month.contains(t.end); });
    CHECK(r.trip_count == in_month);
    CHECK(r.night_fraction == Approx(0.2).margin(0.05));
    CHECK(r.accident_flags == AccidentFlags{});

    store.append_event({kVin, NotificationKind::accident_reported, kStart + days{3}, "dlv-a"});
    store.append_event({kVin, NotificationKind::battery_warning, kStart + days{4}, "dlv-b"});
    r = build_risk_features(store, kVin, month, kLux, nullptr);
    CHECK(r.accident_flags.accident == 1);
    CHECK(r.accident_flags.breakdown == 0);

    CHECK(code_of([&] { build_risk_features(store, kVin, {kStart - days{60}, kStart - days{30}}, kLux, nullptr); }) ==
          Errc::NoDataInPeriod);
    for (double f : {r.night_fraction, r.urban_fraction, r.overspeed_fraction}) {
        CHECK(f >= 0);
        CHECK(f <= 1);
    }
}

TEST_CASE("poll-based and GPS night distance agree", "[analytics][night][property]")
{
    auto c = analytics_config(0.3);
    auto trace = sim::generate_trace(c, kStart, 14, 12);
    sim::SimVehicle vehicle(c, trace, kStart);
    storage::MemorySeriesStore store;
    store_track(store, kVin, track_of(trace));
    std::vector<TelemetrySample> polls;
    for (int d = 0; d <= 14; ++d) {
        auto day = year_month_day{sys_days{2022y / March / 1} + days{d}};
        for (auto tod : {5h, 22h}) {
            auto at = kLux.at(day, tod);
            polls.push_back({kVin, DataPointKind::odometer, Kilometers{vehicle.odometer_at(at)}, at, SampleSource::request});
        }
    }
    store.append_samples(polls);

    double gps = 0, by_polls = 0;
    for (int d = 0; d < 14; ++d) {
        auto day = year_month_day{sys_days{2022y / March / 1} + days{d}};
        auto next = year_month_day{sys_days{day} + days{1}};
        storage::TimeRange night{kLux.at(day, 22h), kLux.at(next, 5h)};
        for (const auto& trip : segment_trips(load_track(store, kVin, night)))
            gps += night_km(trip, kLux);
        by_polls += ingest::nightly_distance_from_polls(store, kVin, day, kLux);
    }
    REQUIRE(gps > 0);
    CHECK(by_polls == Approx(gps).epsilon(0.05));
}

TEST_CASE("cost viability", "[analytics][cost]")
{
    auto bmw = cost_viability(6.5, 81.25);
    CHECK(bmw.ratio == Approx(6.5 / 81.25));
    CHECK(bmw.ratio == Approx(0.080).margin(0.001));
    CHECK(bmw.verdict() == "high-value-only");
    auto cheap = cost_viability(2.1, 81.25);
    CHECK(cheap.ratio == Approx(0.026).margin(0.001));
    CHECK(cheap.viable);
    auto luxury = cost_viability(6.5, 650);
    CHECK(luxury.ratio == Approx(0.01));
    CHECK(luxury.verdict() == "viable");
    CHECK(cost_viability(6.5, 81.25, 0.1).viable);
    CHECK(code_of([] { cost_viability(6.5, 0); }) == Errc::NonPositivePremium);
    CHECK(code_of([] { cost_viability(6.5, -3); }) == Errc::NonPositivePremium);
}

TEST_CASE("theft report", "[analytics][theft]")
{
    storage::MemorySeriesStore store;
    auto c = analytics_config(0);
    c.trip_model.gps_emit_interval_s = 30;
    auto trace = sim::generate_trace(c, kStart, 3, 21);
    REQUIRE(trace.size() >= 2);
    sim::SimVehicle vehicle(c, trace, kStart);
    // Replay what the platform would have collected, plus a lock check after parking.
    DataPointKinds kinds{DataPointKind::gps_coordinates, DataPointKind::doors_lock_state};
    for (const auto& e : vehicle.emissions()) {
        auto s = vehicle.read(kinds, e.at);
        store.append_samples(s);
    }
    auto parked_at = trace.back().end + 5min;
    auto check = vehicle.read({DataPointKind::doors_lock_state}, parked_at);
    store.append_samples(check);

    auto r = theft_report(store, kVin);
    REQUIRE(r.locked);
    CHECK(*r.locked);
    CHECK(r.last_seen_at == parked_at);
    REQUIRE(r.last_trajectory);
    CHECK(r.last_trajectory->front().t == trace.back().start + seconds{static_cast<int>(c.trip_model.gps_emit_interval_s)});
    CHECK(r.last_trajectory->back().t == trace.back().end);
    CHECK(r.last_trajectory->back().pos == vehicle.position_at(trace.back().end));
    CHECK(encode(r)["last_lock_state"] == "locked");

    storage::MemorySeriesStore odometer_only;
    TelemetrySample odo{kVin, DataPointKind::odometer, Kilometers{40100}, kStart + 5h, SampleSource::request};
    odometer_only.append_samples(std::span(&odo, 1));
    auto o = theft_report(odometer_only, kVin);
    CHECK_FALSE(o.locked);
    CHECK_FALSE(o.last_trajectory);
    CHECK(o.last_seen_at == kStart + 5h);

    CHECK(code_of([&] { theft_report(store, Vin::parse("WDDXY000000007001")); }) == Errc::NoDataForVin);
}

TEST_CASE("reports carry a schema version", "[analytics][report]")
{
    storage::MemorySeriesStore store;
    auto c = analytics_config(0.2);
    auto trace = sim::generate_trace(c, kStart, 2, 8);
    store_track(store, kVin, track_of(trace));
    SpeedLimitMap map;
    map.add({"x", RoadClass::urban, 50, {{49.6, 6.12}, {49.61, 6.12}}});
    auto trips = trip_summaries(store, kVin, storage::TimeRange::all(), kLux, &map);
    REQUIRE(trips.size() == trace.size());
    for (const auto& t : trips) {
        CHECK(t.night_km >= 0);
        CHECK(t.night_km <= t.distance_km);
        CHECK(t.overspeed_km <= t.distance_km);
        CHECK(t.point_count >= 2);
    }
    auto risk = build_risk_features(store, kVin, storage::TimeRange::all(), kLux, &map);
    auto json = vin_report(kVin, storage::TimeRange::all(), trips, risk, cost_viability(6.5, 81.25));
    CHECK(json["schema_version"] == kReportSchemaVersion);
    CHECK(json["trips"].size() == trips.size());
    CHECK(json["period"]["from"].is_null());
    CHECK(json["cost"]["verdict"] == "high-value-only");
    auto j0 = json["trips"][0];
    CHECK(j0["night_km"].get<double>() + j0["day_km"].get<double>() == Approx(j0["distance_km"].get<double>()));

    auto csv = trips_csv(trips);
    CHECK(csv.rfind("schema_version,vin,start,end,distance_km", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(trips.size() + 1));
    CHECK(csv.find("\n1," + kVin.str() + ",") != std::string::npos);
}
