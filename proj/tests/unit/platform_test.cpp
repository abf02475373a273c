#include <catch2/catch_amalgamated.hpp>

#include "cvp/platform/platform.hpp"

#include <filesystem>
#include <unistd.h>

using namespace cvp;
using namespace cvp::platform;
using namespace std::chrono;
using consent::ConsentState;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

const Timestamp kStart = sys_days{2022y / March / 1} + 0h; // a Tuesday, 01:00 in Luxembourg
const Vin kBmw = Vin::parse("WBAXY000000003002");
const Vin kMercedes = Vin::parse("WDDXY000000007001");
const Vin kPeugeot = Vin::parse("VF3UC000000009001");
const TimeZone kLux = TimeZone::named("Europe/Luxembourg");

struct ScratchDir {
    fs::path path;
    ScratchDir()
    {
        static int counter = 0;
        path = fs::temp_directory_path() / ("cvp-platform-" + std::to_string(::getpid()) + "-" + std::to_string(++counter));
        fs::remove_all(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
};

FleetVehicle car(const Vin& vin, const char* brand, const char* model)
{
    sim::SimVehicleConfig c(vin, BrandId{brand});
    c.trip_model = sim::named_trip_model(model);
    return FleetVehicle(c);
}

PlatformConfig config(std::uint64_t seed = 42)
{
    PlatformConfig c;
    c.start = kStart;
    c.seed = seed;
    return c;
}

void enroll_fleet(Platform& p)
{
    p.enroll(car(kBmw, "bmw", "bmw-116d"));
    p.enroll(car(kMercedes, "mercedes", "mercedes-gla"));
    p.enroll(car(kPeugeot, "peugeot", "commuter"));
    for (const auto& vin : {kBmw, kMercedes, kPeugeot})
        p.activate(vin);
}

} // namespace

TEST_CASE("config codecs round-trip", "[platform][codec]")
{
    auto c = config(9);
    c.downtime.push_back({kStart + 1h, kStart + 2h});
    c.collector.global_limit = QuotaSpec{100, kMinute, QuotaMode::sliding};
    c.policies = Json{{"policies", Json::array()}};
    auto back = decode_platform_config(encode(c));
    CHECK(encode(back) == encode(c));
    CHECK(back.downtime.size() == 1);

    auto v = car(kPeugeot, "peugeot", "commuter");
    v.oem_eligible = false;
    v.driver_email = "owner@example.com";
    auto w = decode_fleet_vehicle(encode(v));
    CHECK(w.sim == v.sim);
    CHECK(w.vehicle() == v.vehicle());
    CHECK_FALSE(w.oem_eligible);
    CHECK(w.driver_email == "owner@example.com");

    Json bad = encode(c);
    bad["horizon_days"] = 0;
    CHECK_THROWS_AS(decode_platform_config(bad), Error);
}

TEST_CASE("headless activation walks every consent variant", "[platform][consent]")
{
    Platform p(config());
    auto bmw = p.enroll(car(kBmw, "bmw", "bmw-116d"));
    CHECK(bmw.vin_check == eligibility::VinCheck::Eligible);
    auto peugeot = p.enroll(car(kPeugeot, "peugeot", "commuter"));
    CHECK(peugeot.vin_check == eligibility::VinCheck::Pending); // manual review

    auto r = p.activate(kBmw);
    CHECK(r.state == ConsentState::Active);
    CHECK(p.now() == kStart); // the simple portal needs no waiting

    r = p.activate(kPeugeot);
    REQUIRE(r.state == ConsentState::Active);
    std::vector<ConsentState> path;
    for (const auto& t : r.history)
        path.push_back(t.to);
    CHECK(path == std::vector<ConsentState>{ConsentState::EmailSent, ConsentState::IdentityVerification, ConsentState::PrivacySettings,
                                            ConsentState::TransmissionTest, ConsentState::BackgroundProcessing,
                                            ConsentState::AwaitingOdometerReport, ConsentState::Active});
    // Two business days of manual review, then at least three days of background processing.
    CHECK(r.created_at >= kStart + days{2});
    CHECK(*r.granted_at - *r.background_started_at >= days{3});
    CHECK(r.last_reported_km == Approx(p.simulator().vehicle(kPeugeot).odometer_at(*r.last_odometer_report_at)));

    auto rejected = car(Vin::parse("VF3UC000000010002"), "peugeot", "commuter");
    rejected.oem_eligible = false;
    p.enroll(rejected);
    CHECK_THROWS_AS(p.activate(rejected.sim.vin, days{10}), Error);
}

TEST_CASE("two polls a day at vehicle-local 05:00 and 22:00", "[platform][scheduler]")
{
    Platform p(config());
    p.enroll(car(kMercedes, "mercedes", "mercedes-gla"));
    p.activate(kMercedes);
    p.run_until(kStart + days{7});
    auto samples = p.series().query_series(kMercedes, DataPointKind::odometer, storage::TimeRange::all());
    REQUIRE(samples.size() == 14);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto day = year_month_day{sys_days{2022y / March / 1} + days{static_cast<int>(i / 2)}};
        auto slot = kLux.at(day, i % 2 == 0 ? hours{5} : hours{22});
        CHECK(abs(samples[i].observed_at - slot) <= p.scheduler().tick());
    }
    // Readings track the simulated odometer.
    for (const auto& s : samples)
        CHECK(std::get<Kilometers>(s.value).value ==
              Approx(p.simulator().vehicle(kMercedes).odometer_at(s.observed_at)));
    CHECK(p.metrics().get(ingest::metric::slots_missed) == 0);
}

TEST_CASE("a complex-variant consent expires without an odometer report", "[platform][consent]")
{
    Platform p(config());
    p.enroll(car(kPeugeot, "peugeot", "commuter"));
    auto r = p.activate(kPeugeot);
    REQUIRE(r.state == ConsentState::Active);
    auto reported = *r.last_odometer_report_at;

    p.run_until(reported + days{90});
    CHECK(p.consents().record(kPeugeot)->state == ConsentState::Active);
    auto before = p.series().data_point_count(kPeugeot);
    CHECK(before > 0);

    p.run_until(reported + days{91});
    CHECK(p.consents().record(kPeugeot)->state == ConsentState::Expired);
    auto expired_at = p.consents().record(kPeugeot)->history.back().at;
    CHECK(expired_at - reported <= days{90} + p.config().housekeeping_every);

    p.run_until(reported + days{120});
    auto after = p.series().query_series(kPeugeot, DataPointKind::odometer, {expired_at, Timestamp::max()});
    CHECK(after.empty());

    // A fresh report resumes collection.
    r = p.activate(kPeugeot);
    CHECK(r.state == ConsentState::Active);
    p.advance(days{2});
    CHECK_FALSE(p.series().query_series(kPeugeot, DataPointKind::odometer, {r.granted_at.value(), Timestamp::max()}).empty());
}

TEST_CASE("platform downtime delays webhooks and misses polls", "[platform][downtime]")
{
    auto c = config();
    auto day2 = year_month_day{2022y / March / 2};
    c.downtime.push_back({kLux.at(day2, 4h), kLux.at(day2, 6h)});
    Platform p(c);
    p.enroll(car(kMercedes, "mercedes", "mercedes-gla"));
    p.enroll(car(kBmw, "bmw", "analytics"));
    p.activate(kMercedes);
    p.activate(kBmw);
    p.run_until(kStart + days{3});
    CHECK(p.metrics().get(ingest::metric::slots_missed) == 1);
    auto odo = p.series().query_series(kMercedes, DataPointKind::odometer, storage::TimeRange::all());
    CHECK(odo.size() == 5);
    // Nothing was stored while the platform was down.
    for (const auto& vin : {kMercedes, kBmw})
        for (auto kind : {DataPointKind::odometer, DataPointKind::gps_coordinates})
            CHECK(p.series().query_series(vin, kind, {c.downtime[0].from, c.downtime[0].to}).empty());
}

TEST_CASE("seeded runs export byte-identical stores", "[platform][replay]")
{
    ScratchDir dir;
    auto run = [&](Millis until, const std::optional<Json>& resume = std::nullopt) {
        auto c = config(7);
        c.data_dir = dir.path;
        Platform p(c);
        if (resume)
            p.restore(*resume);
        else
            enroll_fleet(p);
        p.run_until(kStart + until);
        return std::pair{p.export_all(), p.state()};
    };

    auto [first, first_state] = run(days{30});
    CHECK(first.size() > 10000);
    fs::remove_all(dir.path);
    auto [second, second_state] = run(days{30});
    CHECK(second == first);
    CHECK(second_state == first_state);

    // Stopping after 12 days and resuming in a fresh process gives the same result.
    fs::remove_all(dir.path);
    auto [partial, state] = run(days{12});
    CHECK(partial != first);
    auto [resumed, resumed_state] = run(days{30}, state);
    CHECK(resumed == first);

    // A different seed gives different data.
    fs::remove_all(dir.path);
    auto c = config(8);
    c.data_dir = dir.path;
    Platform other(c);
    enroll_fleet(other);
    other.run_until(kStart + days{30});
    CHECK(other.export_all() != first);
}

TEST_CASE("consented data only", "[platform][consent][property]")
{
    Platform p(config(3));
    enroll_fleet(p);
    p.run_until(kStart + days{20});
    p.consents().revoke(kBmw, consent::RevokeSource::driver_portal);
    auto revoked_at = p.now();
    p.run_until(kStart + days{40});
    for (const auto& vin : {kBmw, kMercedes, kPeugeot}) {
        auto rec = *p.consents().record(vin);
        auto granted = *rec.granted_at;
        for (auto kind : p.profiles().profile_for(p.statics().vehicle(vin)->brand).request_kinds)
            for (const auto& s : p.series().query_series(vin, kind, storage::TimeRange::all())) {
                CHECK(s.observed_at >= granted);
                if (vin == kBmw)
                    CHECK(s.observed_at < revoked_at);
            }
    }
    CHECK_FALSE(p.simulator().consented(kBmw));
}
