#include <catch2/catch_amalgamated.hpp>

#include "cvp/core/crypto.hpp"
#include "cvp/ingest/collector.hpp"
#include "cvp/ingest/credentials.hpp"
#include "cvp/ingest/poll_scheduler.hpp"
#include "cvp/ingest/policy.hpp"
#include "cvp/ingest/sim_ports.hpp"
#include "cvp/ingest/webhook_receiver.hpp"
#include "cvp/sim/simulator.hpp"

#include <algorithm>
#include <deque>
#include <random>

using namespace cvp;
using namespace cvp::ingest;
using namespace std::chrono;

namespace {

const Timestamp kStart = sys_days{2022y / March / 1} + 0h; // 01:00 in Luxembourg
const Vin kBmw = Vin::parse("WBAXY000000003002");
const Vin kMercedes = Vin::parse("WDDXY000000007001");
const Vin kStranger = Vin::parse("WBAXY000000009999");

struct AllowAll : consent::EligibilityGate {
    bool eligible(const Vin&) const override { return true; }
};

struct Fixture;

// Hands deliveries to the receiver unless the platform is down.
struct ReceiverSink : sim::WebhookSink {
    Fixture* f = nullptr;
    std::vector<sim::WebhookDelivery> accepted;
    bool deliver(const sim::WebhookDelivery& d) override;
};

struct Fixture {
    ProfileRegistry profiles = ProfileRegistry::builtin();
    SimClock clock{kStart};
    storage::MemoryStaticStore statics{profiles};
    storage::MemorySeriesStore series;
    AllowAll gate;
    consent::MemoryMailer mailer;
    sim::OemSimulator sim;
    SimVehiclePort vehicle_port{sim, clock};
    InProcessAggregator aggregator{sim};
    Metrics metrics;
    CredentialVault vault{aggregator, clock, metrics};
    consent::ConsentService consents{statics, profiles, gate, mailer, vehicle_port, vault, clock};
    Collector collector{profiles, statics, series, consents, vault, aggregator, clock, metrics};
    PolicySet policies{profiles};
    WebhookReceiver receiver{sim::WebhookSecrets{}, statics, series, consents, collector, policies, clock, metrics};
    PollScheduler scheduler{policies, consents, statics, collector, metrics};
    ReceiverSink sink;
    std::vector<sim::TimeWindow> platform_down;

    explicit Fixture(sim::TripModel model = parked())
        : sim(profiles, clock, sim::SimulatorConfig{kStart})
    {
        sink.f = this;
        sim.set_sink(&sink);
        for (auto [vin, brand] : {std::pair{kBmw, "bmw"}, std::pair{kMercedes, "mercedes"}}) {
            statics.put_vehicle(Vehicle{vin, BrandId{brand}, "X5", 2019, "LU", false});
            sim::SimVehicleConfig c(vin, BrandId{brand});
            c.trip_model = model;
            sim.add_vehicle(c);
        }
        scheduler.start_at(kStart);
    }

    // One short trip a week: effectively parked over a test's horizon.
    static sim::TripModel parked()
    {
        sim::TripModel m;
        m.trips_per_day = 1e-9;
        return m;
    }

    void activate(const Vin& vin)
    {
        consents.initiate(vin, "driver@example.com");
        consents.open_link(*consents.last_link(vin));
        consents.confirm_on_oem_portal(vin, true);
    }

    bool down(Timestamp t) const
    {
        return std::any_of(platform_down.begin(), platform_down.end(), [&](auto w) { return w.contains(t); });
    }

    Timestamp platform_time(Timestamp t) const
    {
        for (const auto& w : platform_down)
            if (w.contains(t))
                return w.to;
        return t;
    }

    // Discrete-event loop over the emitter, the scheduler and the queue.
    void run_until(Timestamp until)
    {
        for (;;) {
            std::optional<Timestamp> next = sim.next_due();
            for (auto due : {scheduler.next_due(), collector.next_due()})
                if (due) {
                    auto t = platform_time(*due);
                    if (!next || t < *next)
                        next = t;
                }
            if (!next || *next > until)
                break;
            clock.set(std::max(*next, clock.now()));
            auto now = clock.now();
            sim.run_due(now);
            if (!down(now)) {
                scheduler.run_due(now);
                collector.run_due(now);
            }
        }
        clock.set(until);
    }

    sim::WebhookDelivery delivery(const Vin& vin, NotificationKind kind, std::string id, const char* brand = "bmw")
    {
        return sim::make_delivery(NotificationEvent{vin, kind, clock.now(), std::move(id)}, BrandId{brand},
                                  sim::WebhookSecrets{});
    }

    DeliveryRecord send(const sim::WebhookDelivery& d)
    {
        return receiver.receive(d.brand, d.body, d.signature, d.delivery_id);
    }

    std::size_t upstream_calls(const Vin& vin) const
    {
        auto log = sim.call_log();
        return std::count_if(log.begin(), log.end(), [&](const auto& c) { return c.vin == vin; });
    }
};

bool ReceiverSink::deliver(const sim::WebhookDelivery& d)
{
    if (f->down(f->clock.now()))
        return false;
    f->receiver.receive(d.brand, d.body, d.signature, d.delivery_id);
    accepted.push_back(d);
    return true;
}

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

std::vector<TelemetrySample> odometer(const Fixture& f, const Vin& vin)
{
    return f.series.query_series(vin, DataPointKind::odometer, storage::TimeRange::all());
}

} // namespace

TEST_CASE("default collection policies follow the OEM capabilities", "[ingest][policy]")
{
    auto profiles = ProfileRegistry::builtin();
    auto bmw = default_policy(profiles.profile_for("bmw"));
    CHECK(bmw.mode == CollectionMode::notification_triggered);
    CHECK(bmw.on_notification.at(NotificationKind::location_change) == profiles.profile_for("bmw").request_kinds);
    CHECK(bmw.poll_times.empty());

    auto mercedes = default_policy(profiles.profile_for("mercedes"));
    CHECK(mercedes.mode == CollectionMode::scheduled_polls);
    CHECK(mercedes.poll_times == std::vector<Millis>{hours{5}, hours{22}});
    CHECK(mercedes.poll_kinds == DataPointKinds{DataPointKind::odometer});

    PolicySet set(profiles);
    auto custom = mercedes;
    custom.poll_times = {hours{6}, hours{21} + minutes{30}};
    set.set(custom);
    CHECK(set.for_brand(BrandId{"mercedes"}) == custom);
    CHECK(set.for_brand(BrandId{"bmw"}) == bmw);

    PolicySet reloaded(profiles);
    load_policies(reloaded, dump_policies(set));
    for (const auto& brand : profiles.brands())
        CHECK(reloaded.for_brand(brand) == set.for_brand(brand));
    CHECK(encode_policy(custom)["poll_times"] == Json::array({"06:00", "21:30"}));

    auto bad = mercedes;
    bad.poll_kinds = {DataPointKind::gps_coordinates}; // Mercedes-like only serves the odometer
    CHECK(code_of([&] { set.set(bad); }) == Errc::InvalidConfig);
    bad = mercedes;
    bad.poll_times = {hours{22}, hours{5}};
    CHECK(code_of([&] { set.set(bad); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { decode_policy(Json{{"brand", "bmw"}, {"mode", "sometimes"}}); }) == Errc::ParseError);
    CHECK(code_of([&] {
              decode_policy(Json{{"brand", "bmw"}, {"mode", "scheduled_polls"}, {"poll_times", {"25:00"}}});
          }) == Errc::ParseError);
}

TEST_CASE("metrics render as flat text with the core counters always present", "[ingest][metrics]")
{
    Metrics m;
    CHECK(m.render_text() == "quota_deferred 0\nsamples_stored 0\nslots_missed 0\nwebhooks_rejected 0\n");
    m.add(metric::samples_stored, 3);
    m.add(metric::slots_fired);
    CHECK(m.get(metric::samples_stored) == 3);
    CHECK(m.render_text().find("slots_fired 1\n") != std::string::npos);
}

TEST_CASE("the vault keeps secrets and hands out references", "[ingest][vault]")
{
    Fixture f;
    f.activate(kBmw);
    auto record = *f.consents.record(kBmw);
    CHECK(record.state == consent::ConsentState::Active);
    CHECK(f.vault.has(kBmw));
    CHECK(record.access_token == f.vault.refs(kBmw).access_token);
    CHECK(record.access_token.rfind("vault:", 0) == 0);
    auto token = f.vault.access_token(kBmw);
    CHECK(token != record.access_token);

    // Snapshot round-trip keeps the same secret.
    CredentialVault copy(f.aggregator, f.clock, f.metrics);
    copy.restore(f.vault.state());
    CHECK(copy.access_token(kBmw) == token);

    // Driver revoke is sent upstream; the OEM stops honouring the grant.
    f.consents.revoke(kBmw, consent::RevokeSource::driver_portal);
    CHECK_FALSE(f.vault.has(kBmw));
    CHECK_FALSE(f.sim.consented(kBmw));
    CHECK(code_of([&] { f.vault.access_token(kBmw); }) == Errc::NoConsent);
}

TEST_CASE("an active BMW request stores every kind with source=request", "[ingest][request]")
{
    Fixture f;
    f.activate(kBmw);
    f.collector.enqueue(kBmw, f.profiles.profile_for("bmw").request_kinds, RequestOrigin::manual);
    CHECK(f.collector.run_due(f.clock.now()) == 1);
    auto last = f.series.last_known(kBmw, f.profiles.profile_for("bmw").request_kinds);
    CHECK(last.size() == f.profiles.profile_for("bmw").request_kinds.size());
    for (const auto& [kind, s] : last) {
        CHECK(s.source == SampleSource::request);
        CHECK(s.observed_at == f.clock.now());
    }
    CHECK(f.metrics.get(metric::samples_stored) == last.size());
    CHECK(f.series.data_point_count(kBmw) == 1);
}

TEST_CASE("requests without an active consent are skipped and counted", "[ingest][request]")
{
    Fixture f;
    f.collector.enqueue(kBmw, {DataPointKind::odometer}, RequestOrigin::manual);
    CHECK(f.collector.run_due(f.clock.now()) == 0);
    CHECK(f.metrics.get(metric::consent_inactive) == 1);
    CHECK(f.upstream_calls(kBmw) == 0);
    CHECK(f.collector.log().back().error == Errc::ConsentInactive);
}

TEST_CASE("60 requests in one minute: 50 run now, 10 wait for the next window", "[ingest][quota]")
{
    Fixture f;
    f.activate(kBmw);
    for (int i = 0; i < 60; ++i)
        f.collector.enqueue(kBmw, {DataPointKind::odometer}, RequestOrigin::manual);
    auto t0 = f.clock.now();
    CHECK(f.collector.run_due(t0) == 50);
    CHECK(f.collector.pending() == 10);
    CHECK(f.metrics.get(metric::quota_deferred) == 10);
    auto next = *f.collector.next_due();
    CHECK(next > t0 + seconds{60});
    CHECK(next <= t0 + seconds{62});

    f.clock.set(next);
    CHECK(f.collector.run_due(next) == 10);
    CHECK(f.collector.pending() == 0);
    auto calls = f.sim.call_log();
    CHECK(calls.size() == 60);
    CHECK(std::none_of(calls.begin(), calls.end(), [](const auto& c) { return c.error.has_value(); }));
}

TEST_CASE("a request waiting through several windows is deferred once", "[ingest][quota]")
{
    Fixture f;
    f.activate(kBmw);
    for (int i = 0; i < 200; ++i)
        f.collector.enqueue(kBmw, {DataPointKind::odometer}, RequestOrigin::manual);
    std::size_t executed = 0;
    while (auto due = f.collector.next_due()) {
        f.clock.set(std::max(*due, f.clock.now()));
        executed += f.collector.run_due(f.clock.now());
    }
    CHECK(executed == 200);
    CHECK(f.metrics.get(metric::quota_deferred) == 150);
    auto log = f.collector.log();
    auto deferred = std::count_if(log.begin(), log.end(),
                                  [](const auto& e) { return e.outcome == RequestOutcome::deferred; });
    CHECK(deferred == 150);
}

TEST_CASE("the quota mirror never lets the OEM refuse a call", "[ingest][quota][property]")
{
    std::mt19937_64 rng(7);
    for (int round = 0; round < 5; ++round) {
        Fixture f;
        f.activate(kBmw);
        auto t0 = f.clock.now();
        // Bursty arrivals over ten minutes.
        std::vector<Timestamp> arrivals;
        for (int i = 0; i < 400; ++i)
            arrivals.push_back(t0 + Millis{static_cast<std::int64_t>(rng() % 600'000)});
        std::sort(arrivals.begin(), arrivals.end());
        for (auto at : arrivals) {
            if (auto due = f.collector.next_due(); due && *due < at) {
                f.clock.set(*due);
                f.collector.run_due(*due);
            }
            f.clock.set(at);
            f.collector.enqueue(kBmw, {DataPointKind::odometer}, RequestOrigin::manual);
            f.collector.run_due(at);
        }
        while (auto due = f.collector.next_due()) {
            f.clock.set(*due);
            f.collector.run_due(*due);
        }
        auto calls = f.sim.call_log();
        REQUIRE(calls.size() == 400);
        std::deque<Timestamp> window;
        for (const auto& c : calls) {
            CHECK_FALSE(c.error.has_value());
            window.push_back(c.at);
            while (c.at - window.front() >= minutes{1})
                window.pop_front();
            CHECK(window.size() <= 50);
        }
    }
}

TEST_CASE("an expired token is refreshed once before a single data call", "[ingest][token]")
{
    Fixture f;
    f.activate(kBmw);
    f.clock.advance(hours{2});
    f.collector.enqueue(kBmw, {DataPointKind::odometer}, RequestOrigin::manual);
    CHECK(f.collector.run_due(f.clock.now()) == 1);
    CHECK(f.metrics.get(metric::token_refreshes) == 1);
    auto calls = f.sim.call_log();
    REQUIRE(calls.size() == 1);
    CHECK_FALSE(calls[0].error.has_value());
}

TEST_CASE("upstream errors are retried with backoff, at most three times", "[ingest][retry]")
{
    SECTION("a short outage is ridden out")
    {
        Fixture f;
        f.activate(kBmw);
        auto t0 = f.clock.now();
        sim::FaultPlan plan;
        plan.api_outages = {sim::TimeWindow{t0, t0 + seconds{3}}};
        f.sim.set_fault_plan(kBmw, plan);
        f.collector.enqueue(kBmw, {DataPointKind::odometer}, RequestOrigin::manual);
        f.run_until(t0 + minutes{1});
        auto calls = f.sim.call_log();
        REQUIRE(calls.size() == 3);
        CHECK(calls[0].at == t0);
        CHECK(calls[1].at == t0 + seconds{1});
        CHECK(calls[2].at == t0 + seconds{3});
        CHECK_FALSE(calls[2].error.has_value());
        CHECK(f.metrics.get(metric::upstream_retries) == 2);
        CHECK(odometer(f, kBmw).size() == 1);
    }
    SECTION("a long outage gives up after the third retry")
    {
        Fixture f;
        f.activate(kBmw);
        auto t0 = f.clock.now();
        sim::FaultPlan plan;
        plan.api_outages = {sim::TimeWindow{t0, t0 + hours{1}}};
        f.sim.set_fault_plan(kBmw, plan);
        f.collector.enqueue(kBmw, {DataPointKind::odometer}, RequestOrigin::manual);
        f.run_until(t0 + minutes{1});
        auto calls = f.sim.call_log();
        REQUIRE(calls.size() == 4);
        CHECK(calls[3].at == t0 + seconds{7});
        CHECK(f.metrics.get(metric::upstream_failures) == 1);
        CHECK(f.collector.pending() == 0);
        CHECK(odometer(f, kBmw).empty());
    }
}

TEST_CASE("webhook routing", "[ingest][webhook]")
{
    Fixture f;
    f.activate(kBmw);

    SECTION("location_change triggers a request and is not stored as an event")
    {
        auto r = f.send(f.delivery(kBmw, NotificationKind::location_change, "dlv-1"));
        CHECK(r.disposition == Disposition::triggered_request);
        CHECK(f.series.event_count() == 0);
        auto pending = f.collector.pending_requests();
        REQUIRE(pending.size() == 1);
        CHECK(pending[0].kinds == f.profiles.profile_for("bmw").request_kinds);
        CHECK(pending[0].origin == RequestOrigin::notification);
    }
    SECTION("a duplicate delivery has no side effects")
    {
        auto d = f.delivery(kBmw, NotificationKind::battery_warning, "dlv-2");
        CHECK(f.send(d).disposition == Disposition::stored);
        auto events = f.series.event_count();
        auto pending = f.collector.pending();
        CHECK(f.send(d).disposition == Disposition::ignored_duplicate);
        CHECK(f.series.event_count() == events);
        CHECK(f.collector.pending() == pending);
        CHECK(f.metrics.get(metric::webhooks_duplicate) == 1);
    }
    SECTION("a bad signature is rejected and logged")
    {
        auto d = f.delivery(kBmw, NotificationKind::accident_reported, "dlv-3");
        d.signature = hmac_sha256_hex("wrong-secret", d.body);
        CHECK(code_of([&] { f.send(d); }) == Errc::BadSignature);
        CHECK(f.metrics.get(metric::webhooks_rejected) == 1);
        CHECK(f.receiver.log().back().disposition == Disposition::rejected_bad_signature);
        CHECK(f.series.event_count() == 0);
        // The genuine delivery still goes through afterwards.
        CHECK(f.send(f.delivery(kBmw, NotificationKind::accident_reported, "dlv-3")).disposition ==
              Disposition::stored);
    }
    SECTION("a tampered body fails the signature check")
    {
        auto d = f.delivery(kBmw, NotificationKind::accident_reported, "dlv-4");
        d.body.replace(d.body.find("accident"), 8, "breakdow");
        CHECK(code_of([&] { f.send(d); }) == Errc::BadSignature);
    }
    SECTION("an unknown VIN goes to quarantine")
    {
        auto r = f.send(f.delivery(kStranger, NotificationKind::accident_reported, "dlv-5"));
        CHECK(r.disposition == Disposition::quarantined);
        CHECK(f.receiver.quarantine().size() == 1);
        CHECK(f.series.event_count() == 0);
    }
    SECTION("revoke_of_consent revokes and stops collection")
    {
        auto r = f.send(f.delivery(kBmw, NotificationKind::revoke_of_consent, "dlv-6"));
        CHECK(r.disposition == Disposition::stored);
        auto record = *f.consents.record(kBmw);
        CHECK(record.state == consent::ConsentState::Revoked);
        CHECK(record.revoke_source == consent::RevokeSource::oem_notification);
        CHECK(f.series.event_count() == 1);
        CHECK(f.send(f.delivery(kBmw, NotificationKind::location_change, "dlv-7")).disposition ==
              Disposition::ignored);
        f.collector.enqueue(kBmw, {DataPointKind::odometer}, RequestOrigin::manual);
        CHECK(f.collector.run_due(f.clock.now()) == 0);
        CHECK(f.upstream_calls(kBmw) == 0);
    }
    SECTION("notifications for a VIN without consent are ignored")
    {
        auto r = f.send(f.delivery(kMercedes, NotificationKind::accident_reported, "dlv-8", "mercedes"));
        CHECK(r.disposition == Disposition::ignored);
        CHECK(f.series.event_count() == 0);
    }
}

TEST_CASE("replaying a delivery log leaves storage unchanged", "[ingest][webhook][property]")
{
    std::mt19937_64 rng(11);
    const std::array kinds{NotificationKind::accident_reported, NotificationKind::battery_warning,
                           NotificationKind::breakdown_reported, NotificationKind::maintenance_changed};
    for (int round = 0; round < 20; ++round) {
        Fixture a;
        a.activate(kBmw);
        std::vector<sim::WebhookDelivery> log;
        for (int i = 0; i < 15; ++i) {
            a.clock.advance(seconds{1 + static_cast<int>(rng() % 100)});
            log.push_back(a.delivery(kBmw, kinds[rng() % kinds.size()], "dlv-" + std::to_string(i)));
            a.send(log.back());
        }
        auto before = storage::export_all_jsonl(a.series);

        // Replay with duplicates, out of order, into the same platform...
        auto replay = log;
        replay.insert(replay.end(), log.begin(), log.begin() + 5);
        std::shuffle(replay.begin(), replay.end(), rng);
        for (const auto& d : replay)
            a.send(d);
        CHECK(storage::export_all_jsonl(a.series) == before);

        // ...and into a fresh one.
        Fixture b;
        b.activate(kBmw);
        for (const auto& d : replay)
            b.send(d);
        CHECK(storage::export_all_jsonl(b.series) == before);
    }
}

TEST_CASE("Mercedes odometer polls at 05:00 and 22:00 local", "[ingest][scheduler]")
{
    Fixture f;
    f.activate(kMercedes);
    f.run_until(kStart + days{7});
    auto samples = odometer(f, kMercedes);
    REQUIRE(samples.size() == 14);
    auto zone = TimeZone::named("Europe/Luxembourg");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto tod = zone.local_time_of_day(samples[i].observed_at);
        CHECK(tod == (i % 2 == 0 ? hours{5} : hours{22}));
        CHECK(samples[i].source == SampleSource::request);
    }
    CHECK(f.metrics.get(metric::slots_succeeded) == 14);
    CHECK(f.metrics.get(metric::slots_missed) == 0);
    CHECK(f.series.data_point_count(kMercedes) == 14);
}

TEST_CASE("Mercedes polls stop at revocation", "[ingest][scheduler]")
{
    Fixture f;
    f.activate(kMercedes);
    f.run_until(kStart + days{3});
    auto revoked_at = f.clock.now();
    f.consents.revoke(kMercedes, consent::RevokeSource::driver_portal);
    f.run_until(kStart + days{7});
    auto samples = odometer(f, kMercedes);
    CHECK(samples.size() <= 6);
    CHECK(std::all_of(samples.begin(), samples.end(), [&](const auto& s) { return s.observed_at < revoked_at; }));
}

TEST_CASE("a slot missed during downtime is not back-filled", "[ingest][scheduler]")
{
    Fixture f;
    f.activate(kMercedes);
    auto zone = TimeZone::named("Europe/Luxembourg");
    auto day3 = year_month_day{sys_days{2022y / March / 3}};
    f.platform_down = {sim::TimeWindow{zone.at(day3, hours{4} + minutes{55}), zone.at(day3, hours{5} + minutes{5})}};
    f.run_until(kStart + days{7});
    CHECK(odometer(f, kMercedes).size() == 13);
    CHECK(f.metrics.get(metric::slots_missed) == 1);
    auto slots = f.scheduler.slots();
    auto missed = std::count_if(slots.begin(), slots.end(), [](const auto& s) { return s.missed; });
    CHECK(missed == 1);
}

TEST_CASE("Mercedes polls during an API outage fail their slot", "[ingest][scheduler]")
{
    Fixture f;
    f.activate(kMercedes);
    sim::FaultPlan plan;
    plan.api_outages = {sim::TimeWindow{kStart + days{2}, kStart + days{4}}};
    f.sim.set_fault_plan(kMercedes, plan);
    f.run_until(kStart + days{7});
    CHECK(odometer(f, kMercedes).size() == 10);
    CHECK(f.metrics.get(metric::slots_failed) == 4);
    // Retries never leave the slot's tick.
    for (const auto& c : f.sim.call_log()) {
        auto tod = TimeZone::named("Europe/Luxembourg").local_time_of_day(c.at);
        bool near_slot = (tod >= hours{5} && tod <= hours{5} + minutes{1}) ||
                         (tod >= hours{22} && tod <= hours{22} + minutes{1});
        CHECK(near_slot);
    }
}

TEST_CASE("night distance from the evening and morning polls", "[ingest][night]")
{
    storage::MemorySeriesStore series;
    auto zone = TimeZone::named("Europe/Luxembourg");
    auto day = year_month_day{2022y / March / 10};
    auto next = year_month_day{2022y / March / 11};
    auto put = [&](Timestamp t, double km) {
        TelemetrySample s{kMercedes, DataPointKind::odometer, Kilometers{km}, t, SampleSource::request};
        series.append_samples(std::span(&s, 1));
    };
    put(zone.at(day, hours{22}), 40100);
    CHECK(code_of([&] { nightly_distance_from_polls(series, kMercedes, day, zone); }) == Errc::MissingSlot);
    put(zone.at(next, hours{5}) + seconds{20}, 40130); // within one tick
    CHECK(nightly_distance_from_polls(series, kMercedes, day, zone) == Catch::Approx(30.0));

    auto day2 = year_month_day{2022y / March / 11};
    auto next2 = year_month_day{2022y / March / 12};
    put(zone.at(day2, hours{22}), 40130);
    put(zone.at(next2, hours{5}), 40130);
    CHECK(nightly_distance_from_polls(series, kMercedes, day2, zone) == 0.0);

    // Too far from the slot to count as its poll.
    auto day3 = year_month_day{2022y / March / 12};
    put(zone.at(day3, hours{22}) + minutes{5}, 40131);
    put(zone.at(year_month_day{2022y / March / 13}, hours{5}), 40140);
    CHECK(code_of([&] { nightly_distance_from_polls(series, kMercedes, day3, zone); }) == Errc::MissingSlot);
}

TEST_CASE("night distance agrees with the simulated odometer", "[ingest][night]")
{
    sim::TripModel busy;
    busy.trips_per_day = 3;
    busy.night_trip_fraction = 0.4;
    Fixture f(busy);
    f.activate(kMercedes);
    f.run_until(kStart + days{10});
    auto zone = TimeZone::named("Europe/Luxembourg");
    const auto& vehicle = f.sim.vehicle(kMercedes);
    for (int d = 1; d < 9; ++d) {
        auto day = year_month_day{sys_days{2022y / March / 1} + days{d}};
        auto next = year_month_day{sys_days{day} + days{1}};
        auto expected = vehicle.odometer_at(zone.at(next, hours{5})) - vehicle.odometer_at(zone.at(day, hours{22}));
        CHECK(nightly_distance_from_polls(f.series, kMercedes, day, zone) == Catch::Approx(expected).margin(1e-6));
    }
}

TEST_CASE("BMW trips turn into notification-triggered samples", "[ingest][flow]")
{
    sim::TripModel m;
    m.trips_per_day = 2;
    Fixture f(m);
    f.activate(kBmw);
    f.run_until(kStart + days{3});
    auto emitted = f.sink.accepted.size();
    REQUIRE(emitted > 0);
    CHECK(f.series.event_count() == 0); // only location changes, none stored as events
    CHECK(f.series.data_point_count(kBmw) == emitted);
    CHECK(f.metrics.get(metric::upstream_429) == 0);
    // Each stored position matches the vehicle's position at the request instant.
    const auto& vehicle = f.sim.vehicle(kBmw);
    for (const auto& s : f.series.query_series(kBmw, DataPointKind::gps_coordinates, storage::TimeRange::all())) {
        auto truth = vehicle.position_at(s.observed_at);
        CHECK(std::get<GeoPoint>(s.value).lat == Catch::Approx(truth.lat).margin(1e-9));
    }
}

TEST_CASE("no sample is stored outside an Active consent interval", "[ingest][gate][property]")
{
    std::mt19937_64 rng(23);
    sim::TripModel m;
    m.trips_per_day = 4;
    for (int round = 0; round < 6; ++round) {
        Fixture f(m);
        std::map<Vin, std::vector<std::pair<Timestamp, Timestamp>>> active;
        std::map<Vin, Timestamp> since;
        auto t = kStart;
        for (int step = 0; step < 25; ++step) {
            t += Millis{static_cast<std::int64_t>(rng() % (6 * 3'600'000))};
            f.run_until(t);
            const Vin& vin = rng() % 2 ? kBmw : kMercedes;
            auto state = f.consents.record(vin) ? f.consents.record(vin)->state : consent::ConsentState::Revoked;
            if (state == consent::ConsentState::Active) {
                if (rng() % 2)
                    f.consents.revoke(vin, consent::RevokeSource::driver_portal);
                else
                    f.send(f.delivery(vin, NotificationKind::revoke_of_consent, "r-" + std::to_string(step),
                                      vin == kBmw ? "bmw" : "mercedes"));
                active[vin].emplace_back(since.at(vin), f.clock.now());
            } else {
                f.activate(vin);
                since.insert_or_assign(vin, f.clock.now());
            }
        }
        for (const auto& [vin, from] : since)
            if (f.consents.record(vin)->state == consent::ConsentState::Active)
                active[vin].emplace_back(from, Timestamp::max());
        for (const Vin& vin : {kBmw, kMercedes})
            for (auto kind : kAllDataPointKinds)
                for (const auto& s : f.series.query_series(vin, kind, storage::TimeRange::all())) {
                    bool inside = std::any_of(active[vin].begin(), active[vin].end(), [&](const auto& iv) {
                        return s.observed_at >= iv.first && s.observed_at < iv.second;
                    });
                    CHECK(inside);
                }
    }
}

TEST_CASE("collector and receiver state survive a snapshot", "[ingest][state]")
{
    Fixture f;
    f.activate(kBmw);
    for (int i = 0; i < 55; ++i)
        f.collector.enqueue(kBmw, {DataPointKind::odometer}, RequestOrigin::manual);
    f.collector.run_due(f.clock.now());
    f.send(f.delivery(kBmw, NotificationKind::battery_warning, "dlv-s"));

    Fixture g;
    g.activate(kBmw);
    g.collector.restore(f.collector.state());
    g.receiver.restore(f.receiver.state());
    CHECK(g.collector.pending() == 5);
    CHECK(g.collector.mirror_in_use(kBmw, f.clock.now()) == 50);
    CHECK(g.collector.state() == f.collector.state());
    CHECK(g.send(f.delivery(kBmw, NotificationKind::battery_warning, "dlv-s")).disposition ==
          Disposition::ignored_duplicate);
}
