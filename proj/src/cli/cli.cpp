#include "cvp/cli/cli.hpp"

#include "cvp/analytics/report.hpp"
#include "cvp/cli/workspace.hpp"
#include "cvp/platform/http.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace cvp::cli {

namespace fs = std::filesystem;
using namespace std::chrono;
using platform::FleetVehicle;
using platform::Platform;
using platform::PlatformConfig;

namespace {

const Timestamp kDefaultStart = sys_days{2022y / March / 1} + 0h;
// Eligibility fixtures are evaluated on a fixed Monday morning and given a
// week, which resolves every manual review.
const Timestamp kFixtureClock = sys_days{2022y / March / 7} + 9h;

struct Usage : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::StorageIo, "cannot read " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, path + ": " + e.what());
    }
}

std::string data_file(const std::string& name_or_path, const std::string& subdir, const std::string& ext)
{
    if (fs::exists(name_or_path))
        return name_or_path;
    auto shipped = fs::path(CVP_DATA_DIR) / subdir / (name_or_path + ext);
    if (fs::exists(shipped))
        return shipped.string();
    throw Error(Errc::StorageIo, "no such file or shipped fixture: " + name_or_path);
}

// --- text rendering ------------------------------------------------------

std::string scalar_text(const Json& v)
{
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_null())
        return "-";
    if (v.is_number_float()) {
        std::ostringstream s;
        s << std::setprecision(6) << v.get<double>();
        return s.str();
    }
    return v.dump();
}

bool is_table(const Json& v)
{
    return v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const Json& row) {
               return row.is_object() && std::none_of(row.begin(), row.end(), [](const Json& c) {
                          return c.is_object() || c.is_array();
                      });
           });
}

void render(const Json& v, std::ostream& out, int indent = 0);

void render_table(const Json& rows, std::ostream& out, int indent)
{
    std::vector<std::string> cols;
    for (const auto& [k, _] : rows[0].items())
        cols.push_back(k);
    std::vector<std::size_t> width(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        width[c] = cols[c].size();
        for (const auto& r : rows)
            width[c] = std::max(width[c], scalar_text(r.value(cols[c], Json())).size());
    }
    auto line = [&](auto cell) {
        out << std::string(indent, ' ');
        for (std::size_t c = 0; c < cols.size(); ++c)
            out << std::left << std::setw(static_cast<int>(width[c]) + (c + 1 < cols.size() ? 2 : 0)) << cell(c);
        out << '\n';
    };
    line([&](std::size_t c) { return cols[c]; });
    for (const auto& r : rows)
        line([&](std::size_t c) { return scalar_text(r.value(cols[c], Json())); });
}

void render(const Json& v, std::ostream& out, int indent)
{
    std::string pad(indent, ' ');
    if (is_table(v)) {
        render_table(v, out, indent);
    } else if (v.is_object()) {
        for (const auto& [k, x] : v.items()) {
            if (x.is_object() || (x.is_array() && !x.empty())) {
                out << pad << k << ":\n";
                render(x, out, indent + 2);
            } else {
                out << pad << k << ": " << (x.is_array() ? "(none)" : scalar_text(x)) << '\n';
            }
        }
    } else if (v.is_array()) {
        for (const auto& x : v) {
            if (x.is_object()) {
                render(x, out, indent);
                out << '\n';
            } else {
                out << pad << scalar_text(x) << '\n';
            }
        }
    } else {
        out << pad << scalar_text(v) << '\n';
    }
}

// --- shared pieces -------------------------------------------------------

struct Globals {
    bool json = false;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string data_dir;
};

fs::path workspace_dir(const Globals& g)
{
    if (!g.data_dir.empty())
        return g.data_dir;
    if (const char* env = std::getenv("UBI_DATA_DIR"); env && *env)
        return env;
    return "ubi-data";
}

PlatformConfig load_config(const Globals& g, std::optional<Json>* fleet = nullptr)
{
    PlatformConfig c;
    c.start = kDefaultStart;
    if (!g.config_path.empty()) {
        Json j = read_json_file(g.config_path);
        if (fleet && j.contains("fleet"))
            *fleet = j.at("fleet");
        c = platform::decode_platform_config(j);
    }
    if (g.seed)
        c.seed = *g.seed;
    return c;
}

std::vector<FleetVehicle> decode_fleet(const Json& j)
{
    std::vector<FleetVehicle> out;
    const Json& list = j.is_object() ? j.at("vehicles") : j;
    for (const auto& v : list)
        out.push_back(platform::decode_fleet_vehicle(v));
    return out;
}

struct StartOptions {
    std::string start;
    std::vector<std::string> brands;
    std::string model;
    std::string fleet_path;
    bool force = false;
};

void add_start_options(CLI::App* cmd, StartOptions& o)
{
    cmd->add_option("--start", o.start, "Simulated start instant (RFC 3339)");
    cmd->add_option("--brand", o.brands, "One car per brand (repeatable; e.g. bmw, mercedes-like, stellantis)");
    cmd->add_option("--model", o.model, "Trip model for generated cars (commuter, bmw-116d, analytics, ...)");
    cmd->add_option("--fleet", o.fleet_path, "Fleet file: {\"vehicles\": [...]}")->check(CLI::ExistingFile);
    cmd->add_flag("--force", o.force, "Replace an existing workspace");
}

Workspace create_workspace(const Globals& g, const StartOptions& o, std::vector<std::string> default_brands)
{
    std::optional<Json> fleet_json;
    auto config = load_config(g, &fleet_json);
    if (!o.start.empty())
        config.start = parse_rfc3339(o.start);
    ProfileRegistry profiles = config.profiles ? load_profiles(*config.profiles) : ProfileRegistry::builtin();
    std::vector<FleetVehicle> fleet;
    if (!o.fleet_path.empty())
        fleet = decode_fleet(read_json_file(o.fleet_path));
    else if (fleet_json && o.brands.empty())
        fleet = decode_fleet(*fleet_json);
    else
        fleet = default_fleet(profiles, o.brands.empty() ? default_brands : o.brands, o.model);
    return Workspace::create(workspace_dir(g), std::move(config), fleet, o.force);
}

Json vehicle_rows(Platform& p)
{
    Json rows = Json::array();
    for (const auto& v : p.statics().vehicles()) {
        auto consent = p.consents().record(v.vin);
        auto elig = p.eligibility().outcome(v.vin);
        rows.push_back({{"vin", v.vin},
                        {"brand", v.brand},
                        {"eligibility", elig ? Json(to_string(elig->vin_check)) : Json(nullptr)},
                        {"consent", consent ? Json(to_string(consent->state)) : Json(nullptr)},
                        {"data_points", p.series().data_point_count(v.vin)}});
    }
    return rows;
}

Json metrics_json(const Platform& p)
{
    Json m = Json::object();
    for (const auto& [k, v] : p.metrics().snapshot())
        m[k] = v;
    return m;
}

Vin parse_vin(const std::string& s) { return Vin::parse(s); }

Vehicle require_vehicle(Platform& p, const Vin& vin)
{
    auto v = p.statics().vehicle(vin);
    if (!v)
        throw Error(Errc::UnknownVin, vin.str());
    return *v;
}

std::vector<Vehicle> selected(Platform& p, const std::string& vin)
{
    if (!vin.empty())
        return {require_vehicle(p, parse_vin(vin))};
    return p.statics().vehicles();
}

storage::TimeRange parse_range(const std::string& from, const std::string& to, const std::string& month_arg)
{
    storage::TimeRange r;
    if (!month_arg.empty()) {
        int y = 0;
        unsigned m = 0;
        char dash = 0;
        std::istringstream in(month_arg);
        if (!(in >> y >> dash >> m) || dash != '-' || m < 1 || m > 12 || !in.eof())
            throw Usage("--month expects YYYY-MM");
        auto first = year{y} / std::chrono::month{m} / 1;
        r.from = sys_days{first};
        r.to = sys_days{first + months{1}};
    }
    if (!from.empty())
        r.from = parse_rfc3339(from);
    if (!to.empty())
        r.to = parse_rfc3339(to);
    return r;
}

std::optional<analytics::SpeedLimitMap> load_map(const std::string& path)
{
    if (path.empty())
        return std::nullopt;
    return analytics::load_speed_map(data_file(path, "maps", ".map"));
}

void run_collection(Workspace& w, Millis duration, bool networked)
{
    auto& p = w.platform();
    if (!networked) {
        p.advance(duration);
        return;
    }
    // Both HTTP surfaces on loopback: the platform reaches the simulator only
    // through its API and receives webhooks over HTTP.
    platform::SimulatorServer sim_server(p.simulator(), p.clock(), [&p](Millis d) {
        p.advance(d);
        return p.now();
    });
    platform::PlatformServer platform_server(p);
    sim_server.start();
    platform_server.start();
    platform::HttpAggregator aggregator(sim_server.base_url());
    platform::HttpWebhookSink sink(platform_server.base_url());
    p.set_aggregator(&aggregator);
    p.set_webhook_sink(&sink);
    try {
        p.advance(duration);
    } catch (...) {
        p.set_aggregator(nullptr);
        p.set_webhook_sink(nullptr);
        throw;
    }
    p.set_aggregator(nullptr);
    p.set_webhook_sink(nullptr);
}

Json odometer_summary(const Platform& p, const Vin& vin, storage::TimeRange range)
{
    auto samples = p.series().query_series(vin, DataPointKind::odometer, range);
    Json j{{"samples", samples.size()}};
    if (!samples.empty()) {
        double first = std::get<Kilometers>(samples.front().value).value;
        double last = std::get<Kilometers>(samples.back().value).value;
        j["first_at"] = samples.front().observed_at;
        j["last_at"] = samples.back().observed_at;
        j["first_km"] = first;
        j["last_km"] = last;
        j["distance_km"] = last - first;
    }
    return j;
}

volatile std::sig_atomic_t g_stop = 0;

} // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Connected-vehicle data platform: simulator, consent, collection and UBI reports", "cvp"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed = 0;
    app.add_flag("--json", g.json, "Machine-readable output");
    app.add_option("--config", g.config_path, "Platform config file (JSON)")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Simulation seed");
    app.add_option("--data-dir", g.data_dir, "Workspace directory (default: $UBI_DATA_DIR or ./ubi-data)");

    // The result of the command; printed once at the end.
    Json result;
    std::optional<std::string> raw; // csv / jsonl bodies bypass rendering
    std::function<void()> action;

    // sim ------------------------------------------------------------------
    auto* sim = app.add_subcommand("sim", "Simulated OEM clouds and time");
    sim->require_subcommand(1);
    StartOptions start;
    auto* sim_start = sim->add_subcommand("start", "Create a workspace and enroll a fleet");
    add_start_options(sim_start, start);
    sim_start->callback([&] {
        action = [&] {
            auto w = create_workspace(g, start, {"bmw", "mercedes", "peugeot"});
            auto& p = w.platform();
            result = {{"workspace", w.dir().string()}, {"now", p.now()}, {"seed", p.config().seed},
                      {"vehicles", vehicle_rows(p)}};
        };
    });

    double adv_days = 0, adv_hours = 0, adv_minutes = 0;
    std::string until;
    auto* sim_advance = sim->add_subcommand("advance", "Run the platform forward in simulated time");
    sim_advance->add_option("--days", adv_days);
    sim_advance->add_option("--hours", adv_hours);
    sim_advance->add_option("--minutes", adv_minutes);
    sim_advance->add_option("--until", until, "Absolute instant (RFC 3339)");
    sim_advance->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            auto from = p.now();
            Millis d = duration_cast<Millis>(duration<double, std::ratio<86400>>(adv_days) +
                                             duration<double, std::ratio<3600>>(adv_hours) +
                                             duration<double, std::ratio<60>>(adv_minutes));
            if (!until.empty())
                d = parse_rfc3339(until) - from;
            if (d < Millis{0} || (d == Millis{0} && until.empty()))
                throw Usage("give a positive --days/--hours/--minutes or a future --until");
            p.advance(d);
            w.save();
            result = {{"from", from}, {"now", p.now()}, {"vehicles", vehicle_rows(p)}, {"metrics", metrics_json(p)}};
        };
    });

    std::string scen_vin, plan_name, plan_file;
    auto* sim_scenario = sim->add_subcommand("scenario", "Install a fault plan on a simulated vehicle");
    sim_scenario->add_option("--vin", scen_vin)->required();
    auto* plan_opt = sim_scenario->add_option("--plan", plan_name, "Shipped plan: none, mercedes-gla, mercedes-gle");
    sim_scenario->add_option("--plan-file", plan_file, "Fault plan JSON")->check(CLI::ExistingFile)->excludes(plan_opt);
    sim_scenario->callback([&] {
        action = [&] {
            if (plan_name.empty() && plan_file.empty())
                throw Usage("give --plan or --plan-file");
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            auto vin = parse_vin(scen_vin);
            auto plan = plan_file.empty() ? sim::named_fault_plan(plan_name, p.now())
                                          : sim::decode_fault_plan(read_json_file(plan_file));
            p.simulator().set_fault_plan(vin, plan);
            w.save();
            result = {{"vin", vin}, {"fault_plan", sim::encode(plan)}};
        };
    });

    auto* sim_status = sim->add_subcommand("status", "Clock, vehicles and counters");
    sim_status->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            result = {{"now", p.now()}, {"seed", p.config().seed}, {"vehicles", vehicle_rows(p)},
                      {"metrics", metrics_json(p)}};
        };
    });

    // eligibility ----------------------------------------------------------
    auto* elig = app.add_subcommand("eligibility", "Requirement and VIN checks");
    elig->require_subcommand(1);
    std::string fixture, rules_path, elig_vin;
    auto fixture_outcomes = [&](eligibility::FleetFixture& fleet) {
        auto rules = eligibility::load_rules(read_json_file(data_file(rules_path.empty() ? "rules" : rules_path, "", ".json")));
        fleet = eligibility::load_fleet(read_json_file(data_file(fixture, "fleets", ".json")));
        SimClock clock(kFixtureClock);
        eligibility::EligibilityService service(rules, fleet.vin_table, clock);
        for (const auto& v : fleet.vehicles)
            service.check(v);
        clock.advance(days{7});
        service.resolve_due();
        return service.outcomes();
    };

    auto* elig_check = elig->add_subcommand("check", "Per-vehicle outcomes");
    elig_check->add_option("--fixture", fixture, "Fleet fixture name (paper19, paper21) or file");
    elig_check->add_option("--rules", rules_path, "Rules file (default: shipped rules)");
    elig_check->add_option("--vin", elig_vin);
    elig_check->callback([&] {
        action = [&] {
            std::vector<eligibility::EligibilityOutcome> outcomes;
            std::optional<Workspace> w;
            if (!fixture.empty()) {
                eligibility::FleetFixture fleet;
                outcomes = fixture_outcomes(fleet);
            } else {
                w.emplace(Workspace::open(workspace_dir(g)));
                outcomes = w->platform().eligibility().outcomes();
            }
            Json rows = Json::array();
            for (const auto& o : outcomes)
                if (elig_vin.empty() || o.vin.str() == elig_vin)
                    rows.push_back(eligibility::encode_outcome(o));
            if (!elig_vin.empty() && rows.empty())
                throw Error(Errc::UnknownVin, elig_vin);
            result = {{"outcomes", rows}};
        };
    });

    auto* elig_report = elig->add_subcommand("report", "Per-brand counts");
    elig_report->add_option("--fixture", fixture, "Fleet fixture name (paper19, paper21) or file");
    elig_report->add_option("--rules", rules_path, "Rules file (default: shipped rules)");
    elig_report->callback([&] {
        action = [&] {
            auto profiles = ProfileRegistry::builtin();
            if (!fixture.empty()) {
                eligibility::FleetFixture fleet;
                auto outcomes = fixture_outcomes(fleet);
                result = eligibility::encode_report(eligibility::eligibility_report(fleet.vehicles, outcomes, profiles));
            } else {
                auto w = Workspace::open(workspace_dir(g));
                auto& p = w.platform();
                result = eligibility::encode_report(
                    eligibility::eligibility_report(p.statics().vehicles(), p.eligibility().outcomes(), p.profiles()));
            }
        };
    });

    // consent --------------------------------------------------------------
    auto* consent = app.add_subcommand("consent", "Drive the consent workflow");
    consent->require_subcommand(1);
    std::string c_vin, c_email, c_step, c_mechanism, c_source = "driver_portal";
    std::optional<double> c_km;
    auto* c_init = consent->add_subcommand("initiate", "Send the consent email");
    c_init->add_option("--vin", c_vin)->required();
    c_init->add_option("--email", c_email, "Driver address (default: the enrolled one)");
    auto* c_stepcmd = consent->add_subcommand("step", "Perform one step as the driver would");
    c_stepcmd->add_option("--vin", c_vin)->required();
    c_stepcmd->add_option("--action", c_step,
                          "open-link, confirm, reject, identity, identity-fail, privacy, transmission-test, "
                          "background, odometer-report, resend-link, auto")
        ->required();
    c_stepcmd->add_option("--mechanism", c_mechanism, "privacy: double_push, screen_v1, ...");
    c_stepcmd->add_option("--km", c_km, "odometer-report: reading (default: the car's odometer now)");
    auto* c_revoke = consent->add_subcommand("revoke", "Revoke a consent");
    c_revoke->add_option("--vin", c_vin)->required();
    c_revoke->add_option("--source", c_source, "driver_portal or oem_notification");
    auto* c_show = consent->add_subcommand("show", "Consent records");
    c_show->add_option("--vin", c_vin);

    auto record_json = [](Platform& p, const consent::ConsentRecord& r) {
        return consent::encode_record(r, p.consents().config());
    };
    c_init->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            auto vin = parse_vin(c_vin);
            auto email = c_email.empty() ? p.driver_email(vin).value_or("driver@example.com") : c_email;
            std::lock_guard lock(p.mutex());
            result = record_json(p, p.consents().initiate(vin, email));
            w.save();
        };
    });
    c_stepcmd->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            auto vin = parse_vin(c_vin);
            auto& c = p.consents();
            std::optional<consent::ConsentRecord> r;
            if (c_step == "open-link") {
                auto link = c.last_link(vin);
                if (!link)
                    throw Error(Errc::NoConsent, vin.str());
                r = c.open_link(*link);
            } else if (c_step == "confirm" || c_step == "reject") {
                r = c.confirm_on_oem_portal(vin, c_step == "confirm");
            } else if (c_step == "identity" || c_step == "identity-fail") {
                r = c.verify_identity(vin, c_step == "identity");
            } else if (c_step == "privacy") {
                r = c.configure_privacy_settings(
                    vin, c_mechanism.empty() ? c.lookup_mechanism(vin) : parse_privacy_mechanism(c_mechanism));
            } else if (c_step == "transmission-test") {
                r = c.run_transmission_test(vin);
            } else if (c_step == "background") {
                r = c.complete_background_processing(vin);
            } else if (c_step == "odometer-report") {
                double km = c_km ? *c_km : p.simulator().vehicle(vin).odometer_at(p.now());
                r = c.report_odometer(vin, km, p.now());
            } else if (c_step == "resend-link") {
                r = c.resend_link(vin);
            } else if (c_step == "auto") {
                r = p.activate(vin);
            } else {
                throw Usage("unknown consent step '" + c_step + "'");
            }
            w.save();
            result = record_json(p, *r);
        };
    });
    c_revoke->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            auto source = consent::parse_revoke_source(c_source);
            result = record_json(p, p.consents().revoke(parse_vin(c_vin), source));
            w.save();
        };
    });
    c_show->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            if (!c_vin.empty()) {
                auto vin = parse_vin(c_vin);
                auto r = p.consents().record(vin);
                if (!r)
                    throw Error(Errc::NoConsent, vin.str());
                result = record_json(p, *r);
                return;
            }
            Json rows = Json::array();
            for (const auto& r : p.consents().records())
                rows.push_back({{"vin", r.vin},
                                {"state", to_string(r.state)},
                                {"driver_email", r.driver_email},
                                {"granted_at", r.granted_at ? Json(*r.granted_at) : Json(nullptr)}});
            result = {{"consents", rows}};
        };
    });

    // collect --------------------------------------------------------------
    auto* collect = app.add_subcommand("collect", "Data collection");
    collect->require_subcommand(1);
    double collect_days = 0;
    bool networked = false;
    StartOptions collect_start;
    auto* collect_run = collect->add_subcommand("run", "Activate every consent, then collect for N simulated days");
    collect_run->add_option("--days", collect_days)->required()->check(CLI::PositiveNumber);
    collect_run->add_flag("--networked", networked, "Go through the HTTP APIs on loopback");
    add_start_options(collect_run, collect_start);
    collect_run->callback([&] {
        action = [&] {
            auto dir = workspace_dir(g);
            bool fresh = collect_start.force || !Workspace::exists(dir);
            if (!fresh && (!collect_start.brands.empty() || !collect_start.fleet_path.empty()))
                throw Usage("a workspace exists; --brand/--fleet need --force");
            auto w = fresh ? create_workspace(g, collect_start, {"bmw", "mercedes", "peugeot"}) : Workspace::open(dir);
            auto& p = w.platform();
            Json skipped = Json::array();
            for (const auto& v : p.statics().vehicles()) {
                auto r = p.consents().record(v.vin);
                if (r && r->state == consent::ConsentState::Active)
                    continue;
                try {
                    auto after = p.activate(v.vin);
                    if (after.state != consent::ConsentState::Active)
                        skipped.push_back({{"vin", v.vin}, {"reason", to_string(after.state)}});
                } catch (const Error& e) {
                    skipped.push_back({{"vin", v.vin}, {"reason", to_string(e.code())}});
                }
            }
            auto from = p.now();
            run_collection(w, duration_cast<Millis>(duration<double, std::ratio<86400>>(collect_days)), networked);
            w.save();
            result = {{"from", from}, {"to", p.now()}, {"seed", p.config().seed}, {"vehicles", vehicle_rows(p)},
                      {"not_collecting", skipped}, {"metrics", metrics_json(p)}};
        };
    });

    // report ---------------------------------------------------------------
    auto* report = app.add_subcommand("report", "UBI analytics");
    report->require_subcommand(1);
    std::string r_vin, r_from, r_to, r_month, r_map;
    bool r_csv = false;
    double data_cost = 0, premium = 0, threshold = 0.05;
    auto range_options = [&](CLI::App* cmd) {
        cmd->add_option("--from", r_from, "RFC 3339");
        cmd->add_option("--to", r_to, "RFC 3339 (exclusive)");
        cmd->add_option("--month", r_month, "YYYY-MM (UTC)");
        cmd->add_option("--map", r_map, "Speed-limit map file or shipped map name");
    };

    auto* r_trips = report->add_subcommand("trips", "Trips and odometer summary per vehicle");
    r_trips->add_option("--vin", r_vin);
    r_trips->add_flag("--csv", r_csv, "Trip table as CSV");
    range_options(r_trips);
    r_trips->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            auto range = parse_range(r_from, r_to, r_month);
            auto map = load_map(r_map);
            Json rows = Json::array();
            std::vector<analytics::TripSummary> all;
            for (const auto& v : selected(p, r_vin)) {
                auto trips = analytics::trip_summaries(p.series(), v.vin, range, TimeZone::named(v.time_zone),
                                                       map ? &*map : nullptr);
                Json t = Json::array();
                for (const auto& s : trips)
                    t.push_back(analytics::encode(s));
                all.insert(all.end(), trips.begin(), trips.end());
                rows.push_back({{"vin", v.vin}, {"brand", v.brand}, {"trips", t},
                                {"odometer", odometer_summary(p, v.vin, range)}});
            }
            if (r_csv)
                raw = analytics::trips_csv(all);
            result = {{"schema_version", analytics::kReportSchemaVersion}, {"vehicles", rows}};
        };
    });

    auto* r_risk = report->add_subcommand("risk", "Risk feature vector");
    r_risk->add_option("--vin", r_vin)->required();
    range_options(r_risk);
    r_risk->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            auto v = require_vehicle(p, parse_vin(r_vin));
            auto map = load_map(r_map);
            result = analytics::encode(analytics::build_risk_features(
                p.series(), v.vin, parse_range(r_from, r_to, r_month), TimeZone::named(v.time_zone),
                map ? &*map : nullptr));
        };
    });

    auto* r_cost = report->add_subcommand("cost", "Data cost against the premium");
    auto* cost_opt = r_cost->add_option("--data-cost", data_cost, "EUR per month per car");
    r_cost->add_option("--premium", premium, "EUR per month")->required();
    r_cost->add_option("--threshold", threshold, "Viable when cost/premium is at most this");
    r_cost->add_option("--vin", r_vin, "Take the data cost from the car's OEM profile")->excludes(cost_opt);
    r_cost->callback([&] {
        action = [&] {
            double cost = data_cost;
            if (!r_vin.empty()) {
                auto w = Workspace::open(workspace_dir(g));
                auto& p = w.platform();
                cost = p.profiles().profile_for(require_vehicle(p, parse_vin(r_vin)).brand).monthly_data_cost_eur;
            } else if (cost_opt->count() == 0) {
                throw Usage("give --data-cost or --vin");
            }
            result = analytics::encode(analytics::cost_viability(cost, premium, threshold));
        };
    });

    auto* r_theft = report->add_subcommand("theft", "Last position, lock state and trajectory");
    r_theft->add_option("--vin", r_vin)->required();
    r_theft->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            result = analytics::encode(analytics::theft_report(w.platform().series(), parse_vin(r_vin)));
        };
    });

    // export / import ------------------------------------------------------
    std::string io_path, io_vin;
    auto* exp = app.add_subcommand("export", "Series dump as JSON lines");
    exp->add_option("--out", io_path, "File (default: stdout)");
    exp->add_option("--vin", io_vin);
    exp->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& series = w.platform().series();
            auto body = io_vin.empty() ? storage::export_all_jsonl(series) : storage::export_jsonl(series, parse_vin(io_vin));
            auto lines = std::count(body.begin(), body.end(), '\n');
            if (io_path.empty()) {
                raw = body;
                return;
            }
            std::ofstream f(io_path, std::ios::trunc);
            f << body;
            if (!f)
                throw Error(Errc::StorageIo, "cannot write " + io_path);
            result = {{"written", io_path}, {"lines", lines}};
        };
    });
    auto* imp = app.add_subcommand("import", "Load a series dump into the workspace");
    imp->add_option("--in", io_path, "JSON-lines file")->required()->check(CLI::ExistingFile);
    imp->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            std::ifstream f(io_path);
            auto r = storage::import_jsonl(w.platform().series(), f);
            w.save();
            result = {{"samples_written", r.samples_written}, {"events_written", r.events_written},
                      {"rejected", r.rejected}};
        };
    });

    // serve ----------------------------------------------------------------
    std::string host = "127.0.0.1", console_dir, serve_map;
    int port = 8080, sim_port = 8081;
    auto* serve = app.add_subcommand("serve", "Platform and simulator HTTP APIs until interrupted");
    serve->add_option("--host", host);
    serve->add_option("--port", port, "Platform API port");
    serve->add_option("--sim-port", sim_port, "Simulator API port");
    serve->add_option("--console", console_dir, "Static console assets served under /console");
    serve->add_option("--map", serve_map, "Speed-limit map for reports");
    serve->callback([&] {
        action = [&] {
            auto w = Workspace::open(workspace_dir(g));
            auto& p = w.platform();
            auto map = load_map(serve_map);
            std::optional<fs::path> console;
            if (!console_dir.empty())
                console = console_dir;
            platform::SimulatorServer sim_server(p.simulator(), p.clock(), [&p](Millis d) {
                p.advance(d);
                return p.now();
            });
            platform::PlatformServer platform_server(p, map ? &*map : nullptr, console);
            sim_server.start(host, sim_port);
            platform_server.start(host, port);
            platform::HttpAggregator aggregator(sim_server.base_url());
            platform::HttpWebhookSink sink(platform_server.base_url());
            p.set_aggregator(&aggregator);
            p.set_webhook_sink(&sink);
            err << "platform " << platform_server.base_url() << ", simulator " << sim_server.base_url() << std::endl;
            g_stop = 0;
            auto previous_int = std::signal(SIGINT, [](int) { g_stop = 1; });
            auto previous_term = std::signal(SIGTERM, [](int) { g_stop = 1; });
            while (!g_stop)
                std::this_thread::sleep_for(milliseconds{200});
            std::signal(SIGINT, previous_int);
            std::signal(SIGTERM, previous_term);
            sim_server.stop();
            platform_server.stop();
            p.set_aggregator(nullptr);
            p.set_webhook_sink(nullptr);
            w.save();
            result = {{"now", p.now()}, {"metrics", metrics_json(p)}};
        };
    });

    auto usage_error = [&](const std::string& what, CLI::App* cmd) {
        if (g.json)
            err << Json{{"error", "Usage"}, {"detail", what}}.dump() << '\n';
        else
            err << "usage error: " << what << "\n\n" << cmd->help();
        return kExitUsage;
    };

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        CLI::App* cmd = &app;
        for (auto* s = &app; s;) {
            auto subs = s->get_subcommands();
            s = subs.empty() ? nullptr : subs.front();
            if (s)
                cmd = s;
        }
        return usage_error(e.what(), cmd);
    }
    if (seed_opt->count() > 0)
        g.seed = seed;

    CLI::App* leaf = &app;
    for (auto* s = &app; s;) {
        auto subs = s->get_subcommands();
        s = subs.empty() ? nullptr : subs.front();
        if (s)
            leaf = s;
    }
    try {
        if (!action)
            throw Usage("incomplete command");
        action();
    } catch (const Usage& e) {
        return usage_error(e.what(), leaf);
    } catch (const Error& e) {
        if (g.json)
            err << platform::error_body(e).dump() << '\n';
        else
            err << "error: " << e.what() << '\n';
        return kExitDomain;
    } catch (const nlohmann::json::exception& e) {
        err << "error: ParseError: " << e.what() << '\n';
        return kExitDomain;
    }

    if (raw)
        out << *raw;
    else if (g.json)
        out << result.dump(2) << '\n';
    else
        render(result, out);
    return kExitOk;
}

} // namespace cvp::cli
