#include <catch2/catch_amalgamated.hpp>

#include "cvp/analytics/report.hpp"
#include "cvp/platform/http.hpp"

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

using namespace cvp;
using namespace cvp::platform;
using namespace std::chrono;
namespace fs = std::filesystem;

namespace {

const Timestamp kStart = sys_days{2022y / March / 1} + 0h;
const Vin kBmw = Vin::parse("WBAXY000000003002");
const Vin kMercedes = Vin::parse("WDDXY000000007001");
const Vin kPeugeot = Vin::parse("VF3UC000000009001");

FleetVehicle car(const Vin& vin, const char* brand, const char* model)
{
    sim::SimVehicleConfig c(vin, BrandId{brand});
    c.trip_model = sim::named_trip_model(model);
    return FleetVehicle(c);
}

Json json_of(const httplib::Result& r)
{
    REQUIRE(r);
    return Json::parse(r->body);
}

std::string path(const std::string& prefix, const Vin& vin, const std::string& suffix = "")
{
    return prefix + vin.str() + suffix;
}

// The networked deployment inside one process: the platform talks to the
// simulator only through its HTTP API and receives webhooks over HTTP.
struct Deployment {
    fs::path console = fs::temp_directory_path() / ("cvp-console-" + std::to_string(::getpid()));
    analytics::SpeedLimitMap map;
    std::unique_ptr<HttpAggregator> aggregator;
    std::unique_ptr<HttpWebhookSink> sink;
    Platform p;
    std::unique_ptr<SimulatorServer> sim_server;
    std::unique_ptr<PlatformServer> platform_server;
    std::unique_ptr<httplib::Client> platform;
    std::unique_ptr<httplib::Client> simulator;

    Deployment() : p(config())
    {
        fs::create_directories(console);
        std::ofstream(console / "index.html") << "<html>console</html>";
        map.add({"main", RoadClass::urban, 50, {{49.60, 6.10}, {49.62, 6.10}}});

        p.enroll(car(kBmw, "bmw", "analytics"));
        p.enroll(car(kMercedes, "mercedes", "mercedes-gla"));
        p.enroll(car(kPeugeot, "peugeot", "commuter"));
        sim_server = std::make_unique<SimulatorServer>(p.simulator(), p.clock(), [this](Millis d) {
            p.advance(d);
            return p.now();
        });
        platform_server = std::make_unique<PlatformServer>(p, &map, console);
        sim_server->start();
        platform_server->start();
        aggregator = std::make_unique<HttpAggregator>(sim_server->base_url());
        sink = std::make_unique<HttpWebhookSink>(platform_server->base_url());
        p.set_aggregator(aggregator.get());
        p.set_webhook_sink(sink.get());
        platform = std::make_unique<httplib::Client>(platform_server->base_url());
        simulator = std::make_unique<httplib::Client>(sim_server->base_url());
        simulator->set_read_timeout(120, 0); // /sim/advance runs the whole platform
    }

    ~Deployment()
    {
        sim_server->stop();
        platform_server->stop();
        p.set_aggregator(nullptr);
        p.set_webhook_sink(nullptr);
        fs::remove_all(console);
    }

    static PlatformConfig config()
    {
        PlatformConfig c;
        c.start = kStart;
        return c;
    }

    httplib::Result post(httplib::Client& c, const std::string& path, const Json& body = Json::object())
    {
        return c.Post(path, body.dump(), "application/json");
    }

    Json action(const Vin& vin, const std::string& name, const Json& body = Json::object())
    {
        auto r = post(*platform, path("/consents/", vin, "/actions/" + name), body);
        REQUIRE(r);
        INFO(r->body);
        REQUIRE(r->status == 200);
        return Json::parse(r->body);
    }

    Timestamp advance(double seconds)
    {
        auto r = post(*simulator, "/sim/advance", {{"seconds", seconds}});
        REQUIRE(r);
        REQUIRE(r->status == 200);
        return Json::parse(r->body).at("now").get<Timestamp>();
    }

    std::string link_token(const Vin& vin)
    {
        auto link = p.consents().last_link(vin);
        REQUIRE(link);
        auto at = link->find("token=");
        REQUIRE(at != std::string::npos);
        return link->substr(at + 6);
    }

    std::uint64_t metric(std::string_view name)
    {
        auto r = platform->Get("/metrics");
        REQUIRE(r);
        std::istringstream in(r->body);
        std::string key;
        std::uint64_t value = 0;
        while (in >> key >> value)
            if (key == name)
                return value;
        FAIL("metric not exposed: " << name);
        return 0;
    }
};

} // namespace

TEST_CASE("consent flows over HTTP", "[http][consent]")
{
    Deployment d;
    auto r = d.post(*d.platform, "/consents", {{"vin", kBmw.str()}, {"driver_email", "bmw@example.com"}});
    REQUIRE(r);
    CHECK(r->status == 201);
    CHECK(Json::parse(r->body).at("state") == "EmailSent");

    auto opened = d.platform->Get("/consent?token=" + d.link_token(kBmw));
    CHECK(json_of(opened).at("state") == "AwaitingOemConfirmation");
    auto active = d.action(kBmw, "confirm", {{"approved", true}});
    CHECK(active.at("state") == "Active");
    CHECK(json_of(d.platform->Get(path("/consents/", kBmw))) == active);
    CHECK(d.p.simulator().consented(kBmw)); // the OAuth handoff went over HTTP

    // Stellantis-like: manual VIN review first, then the long path.
    r = d.post(*d.platform, "/consents", {{"vin", kPeugeot.str()}, {"driver_email", "p@example.com"}});
    REQUIRE(r);
    CHECK(r->status == 403);
    CHECK(Json::parse(r->body).at("error") == "NotEligible");
    d.advance(3 * 86400.0);
    r = d.post(*d.platform, "/consents", {{"vin", kPeugeot.str()}, {"driver_email", "p@example.com"}});
    REQUIRE(r);
    CHECK(r->status == 201);
    CHECK(json_of(d.platform->Get("/consent?token=" + d.link_token(kPeugeot))).at("state") == "IdentityVerification");
    CHECK(d.action(kPeugeot, "identity", {{"passed", true}}).at("state") == "PrivacySettings");
    CHECK(d.action(kPeugeot, "privacy").at("state") == "TransmissionTest");
    CHECK(d.action(kPeugeot, "transmission-test").at("state") == "BackgroundProcessing");
    r = d.post(*d.platform, path("/consents/", kPeugeot, "/actions/background"));
    REQUIRE(r);
    CHECK(r->status == 409);
    d.advance(5 * 86400.0);
    CHECK(json_of(d.platform->Get(path("/consents/", kPeugeot))).at("state") == "AwaitingOdometerReport");
    auto km = d.p.simulator().vehicle(kPeugeot).odometer_at(d.p.now());
    auto peugeot = d.action(kPeugeot, "odometer-report", {{"km", km}});
    CHECK(peugeot.at("state") == "Active");
    CHECK(peugeot.contains("odometer_report_due_at"));

    r = d.post(*d.platform, path("/consents/", kBmw, "/actions/teleport"));
    REQUIRE(r);
    CHECK(r->status == 404);
    r = d.platform->Get(path("/consents/", kMercedes));
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK(Json::parse(r->body).at("error") == "NoConsent");
    r = d.post(*d.platform, "/consents", {{"vin", "not-a-vin"}, {"driver_email", "x@example.com"}});
    REQUIRE(r);
    CHECK(r->status == 400);

    CHECK(d.action(kBmw, "revoke").at("state") == "Revoked");
    CHECK_FALSE(d.p.simulator().consented(kBmw));
}

TEST_CASE("collection, series and reports over HTTP", "[http][ingest][analytics]")
{
    Deployment d;
    for (const auto& vin : {kBmw, kMercedes})
        d.p.activate(vin);
    auto now = d.advance(86400);
    CHECK(now == kStart + days{1});

    // Everything the platform learned came through the two HTTP surfaces.
    CHECK(d.metric("samples_stored") > 0);
    CHECK(d.metric("webhooks_received") > 0);
    CHECK(d.metric("slots_missed") == 0);
    CHECK(d.metric("quota_deferred") <= d.metric("requests_executed"));
    CHECK(d.metric("webhooks_rejected") == 0);
    auto calls = json_of(d.simulator->Get("/sim/calls"));
    CHECK(calls.size() == d.metric("requests_executed"));

    auto odometer = json_of(d.platform->Get(path("/vehicles/", kMercedes, "/series/odometer")));
    CHECK(odometer.size() == 2); // 05:00 and 22:00

    auto gps = json_of(d.platform->Get(path("/vehicles/", kBmw, "/series/gps_coordinates")));
    auto direct = d.p.series().query_series(kBmw, DataPointKind::gps_coordinates, storage::TimeRange::all());
    REQUIRE(gps.size() == direct.size());
    CHECK(gps.front().get<TelemetrySample>() == direct.front());
    auto bucketed = json_of(d.platform->Get(path("/vehicles/", kBmw, "/series/gps_coordinates?bucket_s=3600")));
    CHECK(bucketed.size() < gps.size());
    auto window = json_of(d.platform->Get(path("/vehicles/", kBmw, "/series/gps_coordinates?from=") +
                                          format_rfc3339(kStart + 12h) + "&to=" + format_rfc3339(kStart + 13h)));
    for (const auto& s : window) {
        CHECK(s.at("observed_at").get<Timestamp>() >= kStart + 12h);
        CHECK(s.at("observed_at").get<Timestamp>() < kStart + 13h);
    }

    auto last = json_of(d.platform->Get(path("/vehicles/", kBmw, "/last_known?kinds=odometer,doors_lock_state")));
    CHECK(last.contains("odometer"));
    CHECK(last.contains("doors_lock_state"));

    auto vehicles = json_of(d.platform->Get("/vehicles"));
    CHECK(vehicles.size() == 3);
    auto bmw = json_of(d.platform->Get(path("/vehicles/", kBmw)));
    CHECK(bmw.at("consent_state") == "Active");
    CHECK(bmw.at("data_points") == d.p.series().data_point_count(kBmw));

    // Reports match the library calls.
    auto zone = TimeZone::named("Europe/Luxembourg");
    auto trips = analytics::trip_summaries(d.p.series(), kBmw, storage::TimeRange::all(), zone, &d.map);
    REQUIRE_FALSE(trips.empty());
    auto http_trips = json_of(d.platform->Get(path("/vehicles/", kBmw, "/trips")));
    REQUIRE(http_trips.size() == trips.size());
    CHECK(http_trips[0] == analytics::encode(trips[0]));

    auto report = json_of(d.platform->Get(path("/vehicles/", kBmw, "/report?premium=81.25")));
    auto risk = analytics::build_risk_features(d.p.series(), kBmw, storage::TimeRange::all(), zone, &d.map);
    auto cost = analytics::cost_viability(d.p.profiles().profile_for(BrandId{"bmw"}).monthly_data_cost_eur, 81.25);
    CHECK(report == analytics::vin_report(kBmw, storage::TimeRange::all(), trips, risk, cost));
    CHECK(report.at("schema_version") == analytics::kReportSchemaVersion);

    auto csv = d.platform->Get(path("/vehicles/", kBmw, "/report.csv"));
    REQUIRE(csv);
    CHECK(csv->body == analytics::trips_csv(trips));

    auto theft = json_of(d.platform->Get(path("/vehicles/", kBmw, "/theft")));
    CHECK(theft == analytics::encode(analytics::theft_report(d.p.series(), kBmw)));
    auto none = d.platform->Get(path("/vehicles/", kPeugeot, "/theft"));
    REQUIRE(none);
    CHECK(none->status == 404);

    CHECK(json_of(d.platform->Get("/profiles")).at("profiles").size() == d.p.profiles().brands().size());
    CHECK(json_of(d.platform->Get("/eligibility")).size() == 3);
}

TEST_CASE("webhook endpoint checks signatures", "[http][webhook]")
{
    Deployment d;
    d.p.activate(kBmw);
    auto event = NotificationEvent{kBmw, NotificationKind::accident_reported, d.p.now(), "dlv-http-1"};
    auto delivery = sim::make_delivery(event, BrandId{"bmw"}, sim::WebhookSecrets{});
    httplib::Headers forged{{"delivery_id", delivery.delivery_id}, {"signature", std::string(64, '0')}};
    auto r = d.platform->Post("/webhooks/bmw", forged, delivery.body, "application/json");
    REQUIRE(r);
    CHECK(r->status == 401);
    CHECK(d.metric("webhooks_rejected") == 1);

    HttpWebhookSink sink(d.platform_server->base_url());
    CHECK(sink.deliver(delivery));
    CHECK(sink.deliver(delivery)); // a replay is acknowledged and ignored
    CHECK(d.p.series().event_count() == 1);
    auto events = json_of(d.platform->Get(path("/vehicles/", kBmw, "/events")));
    REQUIRE(events.size() == 1);
    CHECK(events[0].get<NotificationEvent>() == event);

    auto revoke = sim::make_delivery({kBmw, NotificationKind::revoke_of_consent, d.p.now(), "dlv-http-2"},
                                     BrandId{"bmw"}, sim::WebhookSecrets{});
    CHECK(sink.deliver(revoke));
    CHECK(d.p.consents().record(kBmw)->state == consent::ConsentState::Revoked);
}

TEST_CASE("simulator API", "[http][sim]")
{
    Deployment d;
    auto& s = *d.simulator;

    auto r = s.Post("/oauth/token", httplib::Params{{"grant_type", "authorization_code"}, {"code", "bogus"}});
    REQUIRE(r);
    CHECK(r->status >= 400);
    CHECK(Json::parse(r->body).at("error") == "InvalidGrant");
    r = s.Post("/oauth/token", httplib::Params{{"grant_type", "password"}});
    REQUIRE(r);
    CHECK(r->status == 400);

    auto code = json_of(d.post(s, path("/vehicles/", kBmw, "/approve"))).at("code").get<std::string>();
    auto grant = json_of(s.Post("/oauth/token", httplib::Params{{"grant_type", "authorization_code"}, {"code", code}}));
    CHECK(grant.at("token_type") == "Bearer");
    auto token = grant.at("access_token").get<std::string>();

    r = s.Get(path("/vehicles/", kBmw, "/data?kinds=odometer"));
    REQUIRE(r);
    CHECK(r->status == 401);
    auto data = json_of(s.Get(path("/vehicles/", kBmw, "/data?kinds=odometer,gps_coordinates"),
                              httplib::Headers{{"Authorization", "Bearer " + token}}));
    CHECK(data.size() == 2);

    auto refreshed = json_of(s.Post("/oauth/token", httplib::Params{{"grant_type", "refresh_token"},
                                                                    {"refresh_token", grant.at("refresh_token")}}));
    CHECK(refreshed.at("access_token") != token);

    CHECK(json_of(s.Get(path("/vehicles/", kPeugeot, "/privacy-mechanism"))).contains("mechanism"));
    CHECK(json_of(d.post(s, path("/vehicles/", kPeugeot, "/transmission-test"))).at("passed") == true);
    auto trace = s.Get(path("/vehicles/", kBmw, "/trace"));
    REQUIRE(trace);
    CHECK(std::count(trace->body.begin(), trace->body.end(), '\n') ==
          static_cast<long>(d.p.simulator().vehicle(kBmw).trace().size()));
    CHECK(json_of(s.Get("/vehicles")).size() == 3);

    auto scenario = json_of(d.post(s, "/sim/scenario", {{"vin", kMercedes.str()}, {"fault_plan", "mercedes-gla"}}));
    CHECK(scenario.at("fault_plan").at("api_outages").size() == 1);
    r = d.post(s, "/sim/scenario", {{"vin", kMercedes.str()}, {"fault_plan", "volcano"}});
    REQUIRE(r);
    CHECK(r->status == 400);
    r = d.post(s, "/sim/advance", {{"seconds", -5}});
    REQUIRE(r);
    CHECK(r->status == 400);
    CHECK(json_of(s.Get("/sim/clock")).at("now").get<Timestamp>() == kStart);
    CHECK(json_of(s.Get(path("/vehicles/", kBmw, "/trips"))).at("count") == 0);
    CHECK(json_of(s.Get("/sim/dead-letters")).empty());
}

TEST_CASE("HTTP clients map transport failures", "[http][client]")
{
    HttpAggregator dead("http://127.0.0.1:1", milliseconds{300});
    try {
        dead.fetch_data(kBmw, {DataPointKind::odometer}, "t");
        FAIL("expected UpstreamError");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UpstreamError);
    }
    HttpWebhookSink sink("http://127.0.0.1:1", milliseconds{300});
    CHECK_FALSE(sink.deliver(sim::WebhookDelivery{"x", BrandId{"bmw"}, "{}", "sig"}));

    Deployment d;
    HttpAggregator agg(d.sim_server->base_url());
    try {
        agg.fetch_data(kBmw, {DataPointKind::odometer}, "not-a-token");
        FAIL("expected Unauthorized");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::Unauthorized);
    }
}

TEST_CASE("console assets are served under /console", "[http][console]")
{
    Deployment d;
    auto r = d.platform->Get("/console/index.html");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->body == "<html>console</html>");
    CHECK_THROWS_AS(PlatformServer(d.p, nullptr, fs::path("/nonexistent/console")), Error);
}
