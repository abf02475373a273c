#include "cvp/platform/platform.hpp"

#include "cvp/ingest/sim_ports.hpp"

#include <algorithm>

namespace cvp::platform {

using consent::ConsentState;
using namespace std::chrono;

Vehicle FleetVehicle::vehicle() const
{
    return Vehicle{sim.vin,    sim.profile,
                   model,      production_year,
                   purchase_country, fidelity_program_member,
                   sim.time_zone};
}

Json encode(const FleetVehicle& v)
{
    Json j = sim::encode(v.sim);
    j["model"] = v.model;
    j["production_year"] = v.production_year;
    j["purchase_country"] = v.purchase_country;
    j["fidelity_program_member"] = v.fidelity_program_member;
    j["oem_eligible"] = v.oem_eligible;
    j["driver_email"] = v.driver_email;
    return j;
}

FleetVehicle decode_fleet_vehicle(const Json& j)
{
    FleetVehicle v(sim::decode_vehicle_config(j));
    try {
        v.model = j.value("model", v.model);
        v.production_year = j.value("production_year", v.production_year);
        v.purchase_country = j.value("purchase_country", v.purchase_country);
        v.fidelity_program_member = j.value("fidelity_program_member", v.fidelity_program_member);
        v.oem_eligible = j.value("oem_eligible", v.oem_eligible);
        v.driver_email = j.value("driver_email", v.driver_email);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
    return v;
}

Json encode(const PlatformConfig& c)
{
    Json down = Json::array();
    for (const auto& w : c.downtime)
        down.push_back({{"from", w.from}, {"to", w.to}});
    Json j{{"start", c.start},
           {"seed", c.seed},
           {"horizon_days", c.horizon_days},
           {"downtime", down},
           {"housekeeping_every_s", duration_cast<seconds>(c.housekeeping_every).count()},
           {"review_business_days", c.review.business_days}};
    if (c.collector.global_limit)
        j["global_limit"] = *c.collector.global_limit;
    if (c.rules)
        j["rules"] = *c.rules;
    if (c.policies)
        j["policies"] = *c.policies;
    if (c.profiles)
        j["profiles"] = *c.profiles;
    return j;
}

PlatformConfig decode_platform_config(const Json& j)
{
    PlatformConfig c;
    try {
        c.start = j.at("start").get<Timestamp>();
        c.seed = j.value("seed", c.seed);
        c.horizon_days = j.value("horizon_days", c.horizon_days);
        for (const auto& w : j.value("downtime", Json::array()))
            c.downtime.push_back({w.at("from").get<Timestamp>(), w.at("to").get<Timestamp>()});
        c.housekeeping_every = seconds{j.value("housekeeping_every_s", std::int64_t{3600})};
        c.review.business_days = j.value("review_business_days", c.review.business_days);
        if (j.contains("global_limit"))
            c.collector.global_limit = j.at("global_limit").get<QuotaSpec>();
        if (j.contains("rules"))
            c.rules = j.at("rules");
        if (j.contains("policies"))
            c.policies = j.at("policies");
        if (j.contains("profiles"))
            c.profiles = j.at("profiles");
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
    if (c.horizon_days < 1 || c.housekeeping_every <= Millis{0})
        throw Error(Errc::InvalidConfig, "horizon_days and housekeeping_every_s must be positive");
    return c;
}

eligibility::RuleSet default_rules(const ProfileRegistry& profiles)
{
    eligibility::RuleSet rules;
    for (const auto& brand : profiles.brands()) {
        eligibility::RequirementRule r;
        r.brand = brand;
        if (profiles.profile_for(brand).consent_variant == ConsentVariant::StellantisComplex)
            r.vin_check_method = eligibility::VinCheckMethod::manual_review;
        rules.add(r);
    }
    return rules;
}

bool OutcomeGate::eligible(const Vin& vin) const
{
    auto o = service_.outcome(vin);
    return o && o->requirement_ok && o->vin_check == eligibility::VinCheck::Eligible;
}

// Forwards to the in-process simulator unless an override is installed.
class Platform::Upstream final : public ingest::AggregatorPort, public consent::VehiclePort {
public:
    Upstream(sim::OemSimulator& sim, const Clock& clock) : local_(sim), vehicles_(sim, clock) {}

    std::string approve(const Vin& vin) override { return port().approve(vin); }
    sim::AccessTokenGrant exchange_code(std::string_view code) override { return port().exchange_code(code); }
    sim::AccessTokenGrant refresh(std::string_view token) override { return port().refresh(token); }
    void revoke(const Vin& vin) override { port().revoke(vin); }
    std::vector<TelemetrySample> fetch_data(const Vin& vin, const DataPointKinds& kinds,
                                            std::string_view token) override
    {
        return port().fetch_data(vin, kinds, token);
    }

    PrivacyMechanism privacy_mechanism(const Vin& vin) const override { return vehicles_.privacy_mechanism(vin); }
    bool transmission_test(const Vin& vin, Timestamp start, Millis d) override
    {
        return vehicles_.transmission_test(vin, start, d);
    }
    int trips_since(const Vin& vin, Timestamp since) const override { return vehicles_.trips_since(vin, since); }

    std::atomic<ingest::AggregatorPort*> remote{nullptr};

private:
    ingest::AggregatorPort& port()
    {
        auto* r = remote.load();
        return r ? *r : local_;
    }

    ingest::InProcessAggregator local_;
    ingest::SimVehiclePort vehicles_;
};

// Hands deliveries straight to the receiver; refuses them while the platform
// is down so the emitter retries.
class Platform::DirectSink final : public sim::WebhookSink {
public:
    explicit DirectSink(Platform& p) : p_(p) {}

    bool deliver(const sim::WebhookDelivery& d) override
    {
        if (p_.down(p_.now()))
            return false;
        try {
            p_.receiver().receive(d.brand, d.body, d.signature, d.delivery_id);
        } catch (const Error&) {
            return false;
        }
        return true;
    }

private:
    Platform& p_;
};

Platform::Platform(PlatformConfig config) : config_(std::move(config)), clock_(config_.start)
{
    profiles_ = config_.profiles ? load_profiles(*config_.profiles) : ProfileRegistry::builtin();
    if (config_.data_dir) {
        statics_ = std::make_unique<storage::FileStaticStore>(profiles_, *config_.data_dir / "static");
        series_ = std::make_unique<storage::FileSeriesStore>(*config_.data_dir / "series");
    } else {
        statics_ = std::make_unique<storage::MemoryStaticStore>(profiles_);
        series_ = std::make_unique<storage::MemorySeriesStore>();
    }

    sim::SimulatorConfig sc;
    sc.start = config_.start;
    sc.seed = config_.seed;
    sc.horizon_days = config_.horizon_days;
    sim_ = std::make_unique<sim::OemSimulator>(profiles_, clock_, sc);

    auto rules = config_.rules ? eligibility::load_rules(*config_.rules) : default_rules(profiles_);
    eligibility_ = std::make_unique<eligibility::EligibilityService>(std::move(rules), vin_table_, clock_, config_.review);
    for (const auto& [vin, doc] : statics_->documents(storage::Collection::eligibility))
        eligibility_->restore(eligibility::decode_outcome(doc));
    gate_ = std::make_unique<OutcomeGate>(*eligibility_);

    upstream_ = std::make_unique<Upstream>(*sim_, clock_);
    vault_ = std::make_unique<ingest::CredentialVault>(*upstream_, clock_, metrics_);
    consents_ = std::make_unique<consent::ConsentService>(*statics_, profiles_, *gate_, mailer_, *upstream_, *vault_,
                                                          clock_, config_.consent);
    consents_->set_odometer_lookup([this](const Vin& vin) -> std::optional<double> {
        auto last = series_->last_known(vin, {DataPointKind::odometer});
        auto it = last.find(DataPointKind::odometer);
        if (it == last.end())
            return std::nullopt;
        return std::get<Kilometers>(it->second.value).value;
    });
    collector_ = std::make_unique<ingest::Collector>(profiles_, *statics_, *series_, *consents_, *vault_, *upstream_,
                                                     clock_, metrics_, config_.collector);
    policies_ = std::make_unique<ingest::PolicySet>(profiles_);
    if (config_.policies)
        ingest::load_policies(*policies_, *config_.policies);
    receiver_ = std::make_unique<ingest::WebhookReceiver>(sim::WebhookSecrets{}, *statics_, *series_, *consents_,
                                                          *collector_, *policies_, clock_, metrics_);
    scheduler_ = std::make_unique<ingest::PollScheduler>(*policies_, *consents_, *statics_, *collector_, metrics_);
    scheduler_->start_at(config_.start);

    direct_sink_ = std::make_unique<DirectSink>(*this);
    sim_->set_sink(direct_sink_.get());
    next_housekeeping_ = config_.start + config_.housekeeping_every;
}

Platform::~Platform() = default;

void Platform::set_aggregator(ingest::AggregatorPort* port)
{
    upstream_->remote.store(port);
}

void Platform::set_webhook_sink(sim::WebhookSink* sink)
{
    sim_->set_sink(sink ? sink : direct_sink_.get());
}

bool Platform::down(Timestamp t) const
{
    return std::any_of(config_.downtime.begin(), config_.downtime.end(), [&](const auto& w) { return w.contains(t); });
}

void Platform::persist_outcome(const eligibility::EligibilityOutcome& o)
{
    statics_->put_document(storage::Collection::eligibility, o.vin, eligibility::encode_outcome(o));
}

eligibility::EligibilityOutcome Platform::enroll(const FleetVehicle& v)
{
    std::lock_guard lock(run_mutex_);
    auto vehicle = v.vehicle();
    statics_->put_vehicle(vehicle);
    statics_->put_driver(Driver{v.driver_email, ""});
    if (!sim_->has_vehicle(v.sim.vin))
        sim_->add_vehicle(v.sim);
    vin_table_.set(v.sim.vin, v.oem_eligible);
    emails_.insert_or_assign(v.sim.vin, v.driver_email);
    auto outcome = eligibility_->check(vehicle);
    persist_outcome(outcome);
    return outcome;
}

consent::ConsentRecord Platform::activate(const Vin& vin, Millis patience)
{
    std::lock_guard lock(run_mutex_);
    const auto give_up = now() + patience;
    auto& c = *consents_;
    auto wait = [&] { run_until(std::min(give_up, now() + config_.housekeeping_every)); };

    for (;;) {
        auto r = c.record(vin);
        if (r && r->state == ConsentState::Active)
            return *r;
        if (now() >= give_up) {
            if (r)
                return *r;
            throw Error(Errc::NotEligible, "eligibility still pending for " + vin.str());
        }
        if (!r || r->state == ConsentState::Revoked) {
            auto o = eligibility_->outcome(vin);
            if (o && o->requirement_ok && o->vin_check == eligibility::VinCheck::Pending) {
                wait();
                continue;
            }
            auto email = emails_.find(vin);
            c.initiate(vin, r ? r->driver_email : email != emails_.end() ? email->second : "driver@example.com");
            continue;
        }
        switch (r->state) {
        case ConsentState::Initiated:
        case ConsentState::EmailSent:
            c.open_link(*c.last_link(vin));
            break;
        case ConsentState::AwaitingOemConfirmation:
            c.confirm_on_oem_portal(vin, true);
            break;
        case ConsentState::IdentityVerification:
            c.verify_identity(vin, true);
            break;
        case ConsentState::PrivacySettings:
            c.configure_privacy_settings(vin, c.lookup_mechanism(vin));
            break;
        case ConsentState::TransmissionTest:
            if (c.run_transmission_test(vin).state == ConsentState::TransmissionTest)
                wait(); // failed; the driver retries later
            run_until(now());
            break;
        case ConsentState::BackgroundProcessing:
            wait();
            break;
        case ConsentState::AwaitingOdometerReport:
        case ConsentState::Expired:
            c.report_odometer(vin, sim_->vehicle(vin).odometer_at(now()), now());
            break;
        default:
            wait();
        }
    }
}

void Platform::housekeeping(Timestamp now)
{
    consents_->sweep();
    for (const auto& o : eligibility_->resolve_due())
        persist_outcome(o);
    while (next_housekeeping_ <= now)
        next_housekeeping_ += config_.housekeeping_every;
}

void Platform::run_until(Timestamp until)
{
    std::lock_guard lock(run_mutex_);
    auto platform_time = [&](Timestamp t) {
        for (const auto& w : config_.downtime)
            if (w.contains(t))
                return w.to;
        return t;
    };
    for (;;) {
        std::optional<Timestamp> next = sim_->next_due();
        for (auto due : {scheduler_->next_due(), collector_->next_due(), std::optional{next_housekeeping_}})
            if (due) {
                auto t = platform_time(*due);
                if (!next || t < *next)
                    next = t;
            }
        if (!next || *next > until)
            break;
        clock_.set(std::max(*next, clock_.now()));
        auto t = clock_.now();
        sim_->run_due(t);
        if (!down(t)) {
            if (t >= next_housekeeping_)
                housekeeping(t);
            scheduler_->run_due(t);
            collector_->run_due(t);
        }
    }
    clock_.set(std::max(until, clock_.now()));
}

Json Platform::state() const
{
    Json outcomes = Json::array();
    for (const auto& o : eligibility_->outcomes())
        outcomes.push_back(eligibility::encode_outcome(o));
    Json vins = Json::object();
    for (const auto& [vin, ok] : vin_table_.entries())
        vins[vin.str()] = ok;
    Json emails = Json::object();
    for (const auto& [vin, email] : emails_)
        emails[vin.str()] = email;
    return Json{{"now", clock_.now()},
                {"next_housekeeping", next_housekeeping_},
                {"simulator", sim_->state()},
                {"vault", vault_->state()},
                {"collector", collector_->state()},
                {"receiver", receiver_->state()},
                {"scheduler", scheduler_->state()},
                {"metrics", metrics_.snapshot()},
                {"vin_table", vins},
                {"drivers", emails},
                {"eligibility", outcomes}};
}

void Platform::restore(const Json& state)
{
    std::lock_guard lock(run_mutex_);
    try {
        clock_.set(state.at("now").get<Timestamp>());
        next_housekeeping_ = state.at("next_housekeeping").get<Timestamp>();
        sim_->restore(state.at("simulator"));
        vault_->restore(state.at("vault"));
        collector_->restore(state.at("collector"));
        receiver_->restore(state.at("receiver"));
        scheduler_->restore(state.at("scheduler"));
        metrics_.restore(state.at("metrics").get<std::map<std::string, std::uint64_t>>());
        for (const auto& [vin, ok] : state.at("vin_table").items())
            vin_table_.set(Vin::parse(vin), ok.get<bool>());
        for (const auto& [vin, email] : state.at("drivers").items())
            emails_.insert_or_assign(Vin::parse(vin), email.get<std::string>());
        for (const auto& o : state.at("eligibility"))
            eligibility_->restore(eligibility::decode_outcome(o));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

std::optional<std::string> Platform::driver_email(const Vin& vin) const
{
    auto it = emails_.find(vin);
    if (it == emails_.end())
        return std::nullopt;
    return it->second;
}

std::string Platform::export_all() const
{
    return statics_->snapshot().dump() + "\n" + storage::export_all_jsonl(*series_);
}

} // namespace cvp::platform
