#include "cvp/platform/http.hpp"

#include "cvp/analytics/report.hpp"

#include <httplib.h>

#include <mutex>
#include <sstream>
#include <thread>

namespace cvp::platform {

using httplib::Request;
using httplib::Response;
using namespace std::chrono;

Json error_body(const Error& e)
{
    return Json{{"error", to_string(e.code())}, {"detail", e.what()}};
}

namespace {

void send_json(Response& res, const Json& j, int status = 200)
{
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

Json body_json(const Request& req)
{
    if (req.body.empty())
        return Json::object();
    Json j = parse_json(req.body);
    if (!j.is_object())
        throw Error(Errc::ParseError, "request body must be a JSON object");
    return j;
}

std::optional<std::string> param(const Request& req, const char* name)
{
    if (!req.has_param(name))
        return std::nullopt;
    return req.get_param_value(name);
}

storage::TimeRange range_of(const Request& req)
{
    storage::TimeRange r;
    if (auto from = param(req, "from"))
        r.from = parse_rfc3339(*from);
    if (auto to = param(req, "to"))
        r.to = parse_rfc3339(*to);
    return r;
}

DataPointKinds kinds_of(const std::string& csv)
{
    DataPointKinds kinds;
    std::stringstream in(csv);
    std::string name;
    while (std::getline(in, name, ','))
        if (!name.empty())
            kinds.insert(parse_data_point_kind(name));
    return kinds;
}

std::string kinds_csv(const DataPointKinds& kinds)
{
    std::string out;
    for (auto k : kinds) {
        if (!out.empty())
            out += ',';
        out += to_string(k);
    }
    return out;
}

void install_error_handler(httplib::Server& svr)
{
    svr.set_exception_handler([](const Request&, Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_json(res, error_body(e), http_status(e.code()));
        } catch (const nlohmann::json::exception& e) {
            send_json(res, error_body(Error(Errc::ParseError, e.what())), 400);
        } catch (const std::exception& e) {
            send_json(res, Json{{"error", "Internal"}, {"detail", e.what()}}, 500);
        }
    });
}

} // namespace

// --- HttpService -------------------------------------------------------------

struct HttpService::Impl {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::string host;
};

HttpService::HttpService() : impl_(std::make_unique<Impl>())
{
    install_error_handler(impl_->server);
}

HttpService::~HttpService()
{
    stop();
}

int HttpService::start(const std::string& host, int port)
{
    auto& s = impl_->server;
    impl_->host = host;
    if (port == 0) {
        impl_->port = s.bind_to_any_port(host);
    } else {
        impl_->port = s.bind_to_port(host, port) ? port : -1;
    }
    if (impl_->port <= 0)
        throw Error(Errc::StorageIo, "cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([&s] { s.listen_after_bind(); });
    s.wait_until_ready();
    return impl_->port;
}

void HttpService::listen(const std::string& host, int port)
{
    impl_->host = host;
    impl_->port = port;
    if (!impl_->server.listen(host, port))
        throw Error(Errc::StorageIo, "cannot listen on " + host + ":" + std::to_string(port));
}

void HttpService::stop()
{
    if (!impl_)
        return;
    impl_->server.stop();
    if (impl_->thread.joinable())
        impl_->thread.join();
}

int HttpService::port() const
{
    return impl_->port;
}

std::string HttpService::base_url() const
{
    return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

// --- PlatformServer ----------------------------------------------------------

namespace {

Json vehicle_view(Platform& p, const Vehicle& v)
{
    Json j = v;
    auto rec = p.consents().record(v.vin);
    j["consent_state"] = rec ? Json(consent::to_string(rec->state)) : Json(nullptr);
    auto outcome = p.eligibility().outcome(v.vin);
    j["eligibility"] = outcome ? eligibility::encode_outcome(*outcome) : Json(nullptr);
    auto seen = p.series().last_seen(v.vin);
    j["last_seen"] = seen ? Json(*seen) : Json(nullptr);
    j["data_points"] = p.series().data_point_count(v.vin);
    return j;
}

Vehicle require_vehicle(Platform& p, const std::string& vin_text)
{
    auto vin = Vin::parse(vin_text);
    auto v = p.statics().vehicle(vin);
    if (!v)
        throw Error(Errc::UnknownVin, vin.str());
    return *v;
}

} // namespace

PlatformServer::PlatformServer(Platform& p, const analytics::SpeedLimitMap* map,
                               std::optional<std::filesystem::path> console_dir, ReportDefaults report)
{
    auto& svr = impl_->server;

    svr.Post("/webhooks/:brand", [&p](const Request& req, Response& res) {
        if (p.down(p.now())) {
            send_json(res, Json{{"error", "Unavailable"}}, 503);
            return;
        }
        auto record = p.receiver().receive(BrandId{req.path_params.at("brand")}, req.body,
                                           req.get_header_value(sim::kSignatureHeader),
                                           req.get_header_value(sim::kDeliveryIdHeader));
        send_json(res, ingest::encode_delivery_record(record));
    });

    svr.Get("/metrics", [&p](const Request&, Response& res) {
        res.set_content(p.metrics().render_text(), "text/plain; version=0.0.4");
    });

    svr.Get("/profiles", [&p](const Request&, Response& res) { send_json(res, dump_profiles(p.profiles())); });

    // consent workflow
    auto record_json = [&p](const consent::ConsentRecord& r) { return consent::encode_record(r, p.consents().config()); };

    svr.Post("/consents", [&p, record_json](const Request& req, Response& res) {
        Json b = body_json(req);
        auto vin = Vin::parse(b.at("vin").get<std::string>());
        auto r = p.consents().initiate(vin, b.at("driver_email").get<std::string>());
        send_json(res, record_json(r), 201);
    });

    svr.Get("/consents", [&p, record_json](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& r : p.consents().records())
            out.push_back(record_json(r));
        send_json(res, out);
    });

    svr.Get("/consents/:vin", [&p, record_json](const Request& req, Response& res) {
        auto vin = Vin::parse(req.path_params.at("vin"));
        auto r = p.consents().record(vin);
        if (!r)
            throw Error(Errc::NoConsent, vin.str());
        send_json(res, record_json(*r));
    });

    // The emailed link.
    svr.Get("/consent", [&p, record_json](const Request& req, Response& res) {
        auto token = param(req, "token");
        if (!token)
            throw Error(Errc::InvalidLink, "missing token");
        send_json(res, record_json(p.consents().open_link(*token)));
    });

    svr.Post("/consents/:vin/actions/:action", [&p, record_json](const Request& req, Response& res) {
        auto vin = Vin::parse(req.path_params.at("vin"));
        const auto& action = req.path_params.at("action");
        Json b = body_json(req);
        auto& c = p.consents();
        std::optional<consent::ConsentRecord> r;
        if (action == "open-link") {
            r = c.open_link(b.at("token").get<std::string>());
        } else if (action == "resend-link") {
            r = c.resend_link(vin);
        } else if (action == "confirm") {
            r = c.confirm_on_oem_portal(vin, b.value("approved", true));
        } else if (action == "identity") {
            r = c.verify_identity(vin, b.value("passed", true));
        } else if (action == "privacy") {
            auto m = b.contains("mechanism") ? parse_privacy_mechanism(b.at("mechanism").get<std::string>())
                                             : c.lookup_mechanism(vin);
            r = c.configure_privacy_settings(vin, m);
        } else if (action == "transmission-test") {
            r = c.run_transmission_test(vin);
        } else if (action == "background") {
            r = c.complete_background_processing(vin);
        } else if (action == "odometer-report") {
            auto at = b.contains("at") ? b.at("at").get<Timestamp>() : p.now();
            r = c.report_odometer(vin, b.at("km").get<double>(), at);
        } else if (action == "revoke") {
            r = c.revoke(vin, consent::RevokeSource::driver_portal);
        } else {
            send_json(res, Json{{"error", "UnknownAction"}, {"detail", action}}, 404);
            return;
        }
        send_json(res, record_json(*r));
    });

    // vehicles and series
    svr.Get("/vehicles", [&p](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& v : p.statics().vehicles())
            out.push_back(vehicle_view(p, v));
        send_json(res, out);
    });

    svr.Get("/vehicles/:vin", [&p](const Request& req, Response& res) {
        send_json(res, vehicle_view(p, require_vehicle(p, req.path_params.at("vin"))));
    });

    svr.Get("/vehicles/:vin/series/:kind", [&p](const Request& req, Response& res) {
        auto v = require_vehicle(p, req.path_params.at("vin"));
        auto kind = parse_data_point_kind(req.path_params.at("kind"));
        std::optional<Millis> bucket;
        if (auto b = param(req, "bucket_s"))
            bucket = seconds{std::stoll(*b)};
        Json out = Json::array();
        for (const auto& s : p.series().query_series(v.vin, kind, range_of(req), bucket))
            out.push_back(s);
        send_json(res, out);
    });

    svr.Get("/vehicles/:vin/events", [&p](const Request& req, Response& res) {
        auto v = require_vehicle(p, req.path_params.at("vin"));
        Json out = Json::array();
        for (const auto& e : p.series().query_events(v.vin, range_of(req)))
            out.push_back(e);
        send_json(res, out);
    });

    svr.Get("/vehicles/:vin/last_known", [&p](const Request& req, Response& res) {
        auto v = require_vehicle(p, req.path_params.at("vin"));
        auto kinds = kinds_of(param(req, "kinds").value_or(""));
        if (kinds.empty())
            kinds = p.profiles().profile_for(v.brand).request_kinds;
        Json out = Json::object();
        for (const auto& [kind, s] : p.series().last_known(v.vin, kinds))
            out[std::string(to_string(kind))] = s;
        send_json(res, out);
    });

    // analytics
    auto trips_of = [&p, map](const Request& req, const Vehicle& v) {
        return analytics::trip_summaries(p.series(), v.vin, range_of(req), TimeZone::named(v.time_zone), map);
    };

    svr.Get("/vehicles/:vin/trips", [&p, trips_of](const Request& req, Response& res) {
        auto v = require_vehicle(p, req.path_params.at("vin"));
        Json out = Json::array();
        for (const auto& t : trips_of(req, v))
            out.push_back(analytics::encode(t));
        send_json(res, out);
    });

    svr.Get("/vehicles/:vin/report", [&p, map, report, trips_of](const Request& req, Response& res) {
        auto v = require_vehicle(p, req.path_params.at("vin"));
        auto range = range_of(req);
        std::optional<analytics::RiskFeatureVector> risk;
        try {
            risk = analytics::build_risk_features(p.series(), v.vin, range, TimeZone::named(v.time_zone), map);
        } catch (const Error& e) {
            if (e.code() != Errc::NoDataInPeriod)
                throw;
        }
        double premium = report.premium_eur_month;
        if (auto q = param(req, "premium"))
            premium = std::stod(*q);
        auto cost = analytics::cost_viability(p.profiles().profile_for(v.brand).monthly_data_cost_eur, premium,
                                              report.viability_threshold);
        send_json(res, analytics::vin_report(v.vin, range, trips_of(req, v), risk, cost));
    });

    svr.Get("/vehicles/:vin/report.csv", [&p, trips_of](const Request& req, Response& res) {
        auto v = require_vehicle(p, req.path_params.at("vin"));
        res.set_content(analytics::trips_csv(trips_of(req, v)), "text/csv");
    });

    svr.Get("/vehicles/:vin/theft", [&p](const Request& req, Response& res) {
        auto vin = Vin::parse(req.path_params.at("vin"));
        send_json(res, analytics::encode(analytics::theft_report(p.series(), vin)));
    });

    svr.Get("/eligibility", [&p](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& o : p.eligibility().outcomes())
            out.push_back(eligibility::encode_outcome(o));
        send_json(res, out);
    });

    if (console_dir && !svr.set_mount_point("/console", console_dir->string()))
        throw Error(Errc::StorageIo, "console directory not found: " + console_dir->string());
}

// --- SimulatorServer ---------------------------------------------------------

SimulatorServer::SimulatorServer(sim::OemSimulator& sim, Clock& clock, Advance advance)
{
    auto& svr = impl_->server;

    svr.Post("/oauth/token", [&sim](const Request& req, Response& res) {
        std::string grant, code, refresh;
        if (req.get_header_value("Content-Type").find("application/json") != std::string::npos) {
            Json b = body_json(req);
            grant = b.value("grant_type", "");
            code = b.value("code", "");
            refresh = b.value("refresh_token", "");
        } else {
            grant = req.get_param_value("grant_type");
            code = req.get_param_value("code");
            refresh = req.get_param_value("refresh_token");
        }
        if (grant == "authorization_code")
            send_json(res, sim::encode(sim.exchange_code(code)));
        else if (grant == "refresh_token")
            send_json(res, sim::encode(sim.refresh(refresh)));
        else
            send_json(res, Json{{"error", "InvalidGrant"}, {"detail", "unsupported grant_type"}}, 400);
    });

    svr.Get("/vehicles", [&sim](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& vin : sim.vins())
            out.push_back({{"vin", vin}, {"brand", sim.profile_of(vin).brand}, {"consented", sim.consented(vin)}});
        send_json(res, out);
    });

    svr.Post("/vehicles/:vin/approve", [&sim](const Request& req, Response& res) {
        send_json(res, Json{{"code", sim.approve(Vin::parse(req.path_params.at("vin")))}});
    });

    svr.Post("/vehicles/:vin/revoke", [&sim](const Request& req, Response& res) {
        sim.revoke(Vin::parse(req.path_params.at("vin")));
        send_json(res, Json{{"revoked", true}});
    });

    svr.Get("/vehicles/:vin/data", [&sim](const Request& req, Response& res) {
        auto auth = req.get_header_value("Authorization");
        const std::string bearer = "Bearer ";
        if (auth.rfind(bearer, 0) != 0)
            throw Error(Errc::Unauthorized, "missing bearer token");
        auto samples = sim.fetch_data(Vin::parse(req.path_params.at("vin")),
                                      kinds_of(param(req, "kinds").value_or("")), auth.substr(bearer.size()));
        Json out = Json::array();
        for (const auto& s : samples)
            out.push_back(s);
        send_json(res, out);
    });

    svr.Get("/vehicles/:vin/privacy-mechanism", [&sim](const Request& req, Response& res) {
        auto m = sim.privacy_mechanism(Vin::parse(req.path_params.at("vin")));
        send_json(res, Json{{"mechanism", to_string(m)}});
    });

    svr.Post("/vehicles/:vin/transmission-test", [&sim](const Request& req, Response& res) {
        send_json(res, Json{{"passed", sim.transmission_test(Vin::parse(req.path_params.at("vin")))}});
    });

    svr.Get("/vehicles/:vin/trips", [&sim, &clock](const Request& req, Response& res) {
        auto from = param(req, "from") ? parse_rfc3339(*param(req, "from")) : Timestamp{};
        auto to = param(req, "to") ? parse_rfc3339(*param(req, "to")) : clock.now();
        send_json(res, Json{{"count", sim.trips_between(Vin::parse(req.path_params.at("vin")), from, to)}});
    });

    svr.Get("/vehicles/:vin/trace", [&sim](const Request& req, Response& res) {
        const auto& v = sim.vehicle(Vin::parse(req.path_params.at("vin")));
        res.set_content(sim::export_trace_jsonl(v.trace()), "application/x-ndjson");
    });

    svr.Get("/sim/clock", [&clock](const Request&, Response& res) { send_json(res, Json{{"now", clock.now()}}); });

    svr.Post("/sim/advance", [advance](const Request& req, Response& res) {
        Json b = body_json(req);
        double s = b.at("seconds").get<double>();
        if (!(s >= 0))
            throw Error(Errc::InvalidConfig, "seconds must be >= 0");
        auto now = advance(Millis{static_cast<std::int64_t>(s * 1000)});
        send_json(res, Json{{"now", now}});
    });

    svr.Post("/sim/scenario", [&sim, &clock](const Request& req, Response& res) {
        Json b = body_json(req);
        auto vin = Vin::parse(b.at("vin").get<std::string>());
        const Json& f = b.at("fault_plan");
        auto plan = f.is_string() ? sim::named_fault_plan(f.get<std::string>(), clock.now()) : sim::decode_fault_plan(f);
        sim.set_fault_plan(vin, plan);
        send_json(res, Json{{"vin", vin}, {"fault_plan", sim::encode(plan)}});
    });

    svr.Get("/sim/calls", [&sim](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& c : sim.call_log())
            out.push_back({{"at", c.at},
                           {"vin", c.vin},
                           {"kinds", kinds_csv(c.kinds)},
                           {"error", c.error ? Json(to_string(*c.error)) : Json(nullptr)}});
        send_json(res, out);
    });

    svr.Get("/sim/dead-letters", [&sim](const Request&, Response& res) {
        Json out = Json::array();
        for (const auto& d : sim.dead_letters())
            out.push_back({{"delivery_id", d.delivery.delivery_id},
                           {"brand", d.delivery.brand},
                           {"attempts", d.attempts},
                           {"last_attempt", d.last_attempt}});
        send_json(res, out);
    });
}

// --- clients -----------------------------------------------------------------

namespace {

void configure(httplib::Client& c, Millis timeout)
{
    auto s = duration_cast<seconds>(timeout).count();
    auto us = duration_cast<microseconds>(timeout - seconds{s}).count();
    c.set_connection_timeout(s, us);
    c.set_read_timeout(s, us);
    c.set_write_timeout(s, us);
}

// Maps a non-2xx answer back to the error it carries.
[[noreturn]] void raise(const httplib::Result& r, const std::string& what)
{
    if (!r)
        throw Error(Errc::UpstreamError, what + ": " + httplib::to_string(r.error()));
    std::optional<Errc> code;
    std::string detail = what + ": HTTP " + std::to_string(r->status);
    try {
        Json j = Json::parse(r->body);
        if (j.contains("error"))
            code = parse_errc(j.at("error").get<std::string>());
        if (j.contains("detail"))
            detail = j.at("detail").get<std::string>();
    } catch (const nlohmann::json::exception&) {
    }
    if (r->status == 429)
        code = Errc::QuotaExceeded;
    else if (!code || r->status >= 500)
        code = Errc::UpstreamError;
    throw Error(*code, detail);
}

bool ok(const httplib::Result& r)
{
    return r && r->status >= 200 && r->status < 300;
}

} // namespace

struct HttpAggregator::Impl {
    Impl(const std::string& url, Millis timeout) : client(url) { configure(client, timeout); }

    std::mutex mutex;
    httplib::Client client;
};

HttpAggregator::HttpAggregator(std::string base_url, Millis timeout)
    : impl_(std::make_unique<Impl>(base_url, timeout))
{
}

HttpAggregator::~HttpAggregator() = default;

std::string HttpAggregator::approve(const Vin& vin)
{
    std::lock_guard lock(impl_->mutex);
    auto r = impl_->client.Post("/vehicles/" + vin.str() + "/approve");
    if (!ok(r))
        raise(r, "approve");
    return Json::parse(r->body).at("code").get<std::string>();
}

sim::AccessTokenGrant HttpAggregator::exchange_code(std::string_view code)
{
    std::lock_guard lock(impl_->mutex);
    httplib::Params form{{"grant_type", "authorization_code"}, {"code", std::string(code)}};
    auto r = impl_->client.Post("/oauth/token", form);
    if (!ok(r))
        raise(r, "token exchange");
    return sim::decode_grant(Json::parse(r->body));
}

sim::AccessTokenGrant HttpAggregator::refresh(std::string_view refresh_token)
{
    std::lock_guard lock(impl_->mutex);
    httplib::Params form{{"grant_type", "refresh_token"}, {"refresh_token", std::string(refresh_token)}};
    auto r = impl_->client.Post("/oauth/token", form);
    if (!ok(r))
        raise(r, "token refresh");
    return sim::decode_grant(Json::parse(r->body));
}

void HttpAggregator::revoke(const Vin& vin)
{
    std::lock_guard lock(impl_->mutex);
    auto r = impl_->client.Post("/vehicles/" + vin.str() + "/revoke");
    if (!ok(r))
        raise(r, "revoke");
}

std::vector<TelemetrySample> HttpAggregator::fetch_data(const Vin& vin, const DataPointKinds& kinds,
                                                        std::string_view token)
{
    std::lock_guard lock(impl_->mutex);
    httplib::Headers headers{{"Authorization", "Bearer " + std::string(token)}};
    auto r = impl_->client.Get("/vehicles/" + vin.str() + "/data?kinds=" + kinds_csv(kinds), headers);
    if (!ok(r))
        raise(r, "data request");
    std::vector<TelemetrySample> out;
    for (const auto& s : Json::parse(r->body))
        out.push_back(s.get<TelemetrySample>());
    return out;
}

struct HttpWebhookSink::Impl {
    Impl(const std::string& url, Millis timeout) : client(url) { configure(client, timeout); }

    std::mutex mutex;
    httplib::Client client;
};

HttpWebhookSink::HttpWebhookSink(std::string platform_url, Millis timeout)
    : impl_(std::make_unique<Impl>(platform_url, timeout))
{
}

HttpWebhookSink::~HttpWebhookSink() = default;

bool HttpWebhookSink::deliver(const sim::WebhookDelivery& d)
{
    std::lock_guard lock(impl_->mutex);
    httplib::Headers headers{{sim::kDeliveryIdHeader, d.delivery_id}, {sim::kSignatureHeader, d.signature}};
    auto r = impl_->client.Post("/webhooks/" + d.brand.value, headers, d.body, "application/json");
    return ok(r);
}

} // namespace cvp::platform
