#include "cvp/sim/simulator.hpp"

#include "cvp/core/crypto.hpp"
#include "cvp/sim/random.hpp"

#include <algorithm>

namespace cvp::sim {

using namespace std::chrono;

OemSimulator::OemSimulator(const ProfileRegistry& profiles, Clock& clock, SimulatorConfig config)
    : profiles_(profiles), clock_(clock), config_(std::move(config)),
      oauth_(config_.oauth_secret, config_.token_lifetime), cursor_(config_.start - 1ms)
{
}

void OemSimulator::add_vehicle(const SimVehicleConfig& config)
{
    const OemProfile& profile = profiles_.profile_for(config.profile);
    validate(config.trip_model);
    auto zone = TimeZone::named(config.time_zone);
    Trace trace = generate_trace(config, config_.start, config_.horizon_days, config_.seed ^ fnv1a(config.vin.str()));
    auto vehicle = std::make_unique<SimVehicle>(config, std::move(trace), config_.start);

    std::vector<Emission> emissions;
    for (const auto& e : vehicle->emissions())
        if (profile.notification_kinds.count(e.kind))
            emissions.push_back(e);

    std::lock_guard lock(mutex_);
    slots_.insert_or_assign(config.vin, Slot{std::move(vehicle), std::move(emissions), QuotaLimiter(profile.quota, zone), 0});
}

bool OemSimulator::has_vehicle(const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    return slots_.count(vin) != 0;
}

OemSimulator::Slot& OemSimulator::slot(const Vin& vin)
{
    auto it = slots_.find(vin);
    if (it == slots_.end())
        throw Error(Errc::UnknownVehicle, vin.str());
    return it->second;
}

const OemSimulator::Slot& OemSimulator::slot(const Vin& vin) const
{
    auto it = slots_.find(vin);
    if (it == slots_.end())
        throw Error(Errc::UnknownVehicle, vin.str());
    return it->second;
}

const SimVehicle& OemSimulator::vehicle(const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    return *slot(vin).vehicle;
}

std::vector<Vin> OemSimulator::vins() const
{
    std::lock_guard lock(mutex_);
    std::vector<Vin> out;
    for (const auto& [vin, _] : slots_)
        out.push_back(vin);
    return out;
}

const OemProfile& OemSimulator::profile_of(const Vin& vin) const
{
    return profiles_.profile_for(vehicle(vin).config().profile);
}

void OemSimulator::set_fault_plan(const Vin& vin, FaultPlan plan)
{
    std::lock_guard lock(mutex_);
    Slot& s = slot(vin);
    s.vehicle->set_fault_plan(std::move(plan));
    const OemProfile& profile = profiles_.profile_for(s.vehicle->config().profile);
    s.emissions.clear();
    for (const auto& e : s.vehicle->emissions())
        if (profile.notification_kinds.count(e.kind))
            s.emissions.push_back(e);
}

void OemSimulator::set_sink(WebhookSink* sink)
{
    std::lock_guard lock(mutex_);
    sink_ = sink;
}

std::string OemSimulator::approve(const Vin& vin)
{
    std::lock_guard lock(mutex_);
    const Slot& s = slot(vin);
    const OemProfile& profile = profiles_.profile_for(s.vehicle->config().profile);
    return oauth_.issue_code(vin, profile.request_kinds, clock_.now());
}

AccessTokenGrant OemSimulator::exchange_code(std::string_view code)
{
    std::lock_guard lock(mutex_);
    return oauth_.exchange_code(code, clock_.now());
}

AccessTokenGrant OemSimulator::refresh(std::string_view refresh_token)
{
    std::lock_guard lock(mutex_);
    return oauth_.refresh(refresh_token, clock_.now());
}

void OemSimulator::revoke(const Vin& vin)
{
    std::lock_guard lock(mutex_);
    oauth_.revoke(vin);
}

bool OemSimulator::consented(const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    return oauth_.consented(vin);
}

std::vector<TelemetrySample> OemSimulator::fetch_data(const Vin& vin, const DataPointKinds& kinds,
                                                      std::string_view token)
{
    std::lock_guard lock(mutex_);
    const Timestamp now = clock_.now();
    try {
        const auto& info = oauth_.authorize(token, now);
        if (info.vin != vin)
            throw Error(Errc::Unauthorized, "token issued for another vehicle");
        Slot& s = slot(vin);
        const OemProfile& profile = profiles_.profile_for(s.vehicle->config().profile);
        if (kinds.empty())
            throw Error(Errc::UnsupportedKind, "no kinds requested");
        for (auto k : kinds) {
            if (!profile.request_kinds.count(k))
                throw Error(Errc::UnsupportedKind, std::string(to_string(k)));
            if (!info.scope.count(k))
                throw Error(Errc::Unauthorized, "kind outside granted scope");
        }
        for (const auto& w : s.vehicle->config().fault_plan.api_outages)
            if (w.contains(now))
                throw Error(Errc::UpstreamError, "OEM backend unavailable");
        if (!s.quota.try_acquire(now))
            throw Error(Errc::QuotaExceeded, vin.str());
        auto out = s.vehicle->read(kinds, now);
        calls_.push_back({now, vin, kinds, std::nullopt});
        return out;
    } catch (const Error& e) {
        calls_.push_back({now, vin, kinds, e.code()});
        throw;
    }
}

PrivacyMechanism OemSimulator::privacy_mechanism(const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    return slot(vin).vehicle->config().privacy_mechanism;
}

bool OemSimulator::transmission_test(const Vin& vin)
{
    std::lock_guard lock(mutex_);
    Slot& s = slot(vin);
    ++s.transmission_tests;
    return s.transmission_tests > s.vehicle->config().fault_plan.transmission_test_failures;
}

int OemSimulator::trips_between(const Vin& vin, Timestamp from, Timestamp to) const
{
    std::lock_guard lock(mutex_);
    return slot(vin).vehicle->trips_between(from, to);
}

std::optional<Timestamp> OemSimulator::next_emission_locked() const
{
    std::optional<Timestamp> best;
    for (const auto& [_, s] : slots_) {
        auto it = std::upper_bound(s.emissions.begin(), s.emissions.end(), cursor_,
                                   [](Timestamp v, const Emission& e) { return v < e.at; });
        if (it != s.emissions.end() && (!best || it->at < *best))
            best = it->at;
    }
    return best;
}

std::optional<Timestamp> OemSimulator::next_due() const
{
    std::lock_guard lock(mutex_);
    auto best = next_emission_locked();
    if (!retries_.empty() && (!best || retries_.begin()->first < *best))
        best = retries_.begin()->first;
    return best;
}

void OemSimulator::run_due(Timestamp now)
{
    std::vector<Pending> due;
    {
        std::lock_guard lock(mutex_);
        struct Fire {
            Timestamp at;
            Vin vin;
            NotificationKind kind;
        };
        std::vector<Fire> fires;
        for (const auto& [vin, s] : slots_) {
            auto it = std::upper_bound(s.emissions.begin(), s.emissions.end(), cursor_,
                                       [](Timestamp v, const Emission& e) { return v < e.at; });
            for (; it != s.emissions.end() && it->at <= now; ++it)
                fires.push_back({it->at, vin, it->kind});
        }
        std::stable_sort(fires.begin(), fires.end(), [](const Fire& a, const Fire& b) { return a.at < b.at; });
        for (const Fire& f : fires) {
            // no consent at the OEM, nobody to notify
            if (!oauth_.consented(f.vin))
                continue;
            if (f.kind == NotificationKind::revoke_of_consent)
                oauth_.revoke(f.vin);
            std::string id = "dlv-" + hmac_sha256_hex(config_.oauth_secret, f.vin.str() + "|" +
                                                                                std::string(to_string(f.kind)) + "|" +
                                                                                std::to_string(to_unix_ms(f.at)))
                                          .substr(0, 24);
            NotificationEvent ev{f.vin, f.kind, f.at, id};
            const BrandId& brand = slot(f.vin).vehicle->config().profile;
            due.push_back(Pending{make_delivery(ev, brand, config_.webhook_secrets), f.vin, 0, f.at});
        }
        if (now > cursor_)
            cursor_ = now;
        while (!retries_.empty() && retries_.begin()->first <= now) {
            due.push_back(std::move(retries_.begin()->second));
            retries_.erase(retries_.begin());
        }
    }
    std::stable_sort(due.begin(), due.end(),
                     [](const Pending& a, const Pending& b) { return a.next_attempt < b.next_attempt; });
    for (auto& p : due)
        attempt(std::move(p), now);
}

void OemSimulator::attempt(Pending p, Timestamp now)
{
    WebhookSink* sink;
    {
        std::lock_guard lock(mutex_);
        sink = sink_;
    }
    bool ok = false;
    try {
        ok = sink != nullptr && sink->deliver(p.delivery);
    } catch (const std::exception&) {
        ok = false;
    }
    std::lock_guard lock(mutex_);
    ++attempts_;
    ++p.attempts;
    if (ok) {
        ++delivered_;
    } else if (p.attempts >= config_.retry.max_attempts) {
        dead_.push_back({p.delivery, p.attempts, now});
    } else {
        Timestamp next = p.next_attempt + config_.retry.delay_after(p.attempts);
        p.next_attempt = next;
        retries_.emplace(next, std::move(p));
    }
}

void OemSimulator::advance(Millis d)
{
    auto* sim = dynamic_cast<SimClock*>(&clock_);
    if (sim == nullptr)
        throw Error(Errc::InvalidConfig, "advance needs a simulated clock");
    const Timestamp target = sim->now() + d;
    while (true) {
        auto due = next_due();
        if (!due || *due > target)
            break;
        if (*due > sim->now())
            sim->set(*due);
        run_due(sim->now());
    }
    sim->set(target);
}

std::vector<DataCall> OemSimulator::call_log() const
{
    std::lock_guard lock(mutex_);
    return calls_;
}

std::vector<DeadLetter> OemSimulator::dead_letters() const
{
    std::lock_guard lock(mutex_);
    return dead_;
}

std::size_t OemSimulator::delivered_count() const
{
    std::lock_guard lock(mutex_);
    return delivered_;
}

std::size_t OemSimulator::attempt_count() const
{
    std::lock_guard lock(mutex_);
    return attempts_;
}

namespace {

Json delivery_json(const WebhookDelivery& d)
{
    return Json{{"delivery_id", d.delivery_id}, {"brand", d.brand}, {"body", d.body}, {"signature", d.signature}};
}

WebhookDelivery delivery_from(const Json& j)
{
    return WebhookDelivery{j.at("delivery_id").get<std::string>(), j.at("brand").get<BrandId>(),
                           j.at("body").get<std::string>(), j.at("signature").get<std::string>()};
}

} // namespace

Json OemSimulator::state() const
{
    std::lock_guard lock(mutex_);
    Json vehicles = Json::array();
    for (const auto& [vin, s] : slots_)
        vehicles.push_back({{"config", encode(s.vehicle->config())},
                            {"quota", s.quota.state()},
                            {"transmission_tests", s.transmission_tests}});
    Json retries = Json::array();
    for (const auto& [at, p] : retries_)
        retries.push_back({{"delivery", delivery_json(p.delivery)},
                           {"vin", p.vin},
                           {"attempts", p.attempts},
                           {"next_attempt", p.next_attempt}});
    Json dead = Json::array();
    for (const auto& d : dead_)
        dead.push_back({{"delivery", delivery_json(d.delivery)}, {"attempts", d.attempts}, {"last_attempt", d.last_attempt}});
    return Json{{"cursor", cursor_},
                {"oauth", oauth_.state()},
                {"vehicles", vehicles},
                {"retries", retries},
                {"dead_letters", dead},
                {"delivered", delivered_},
                {"attempts", attempts_}};
}

void OemSimulator::restore(const Json& state)
{
    try {
        for (const auto& v : state.at("vehicles"))
            add_vehicle(decode_vehicle_config(v.at("config")));
        std::lock_guard lock(mutex_);
        for (const auto& v : state.at("vehicles")) {
            Slot& s = slot(v.at("config").at("vin").get<Vin>());
            s.quota.restore(v.at("quota"));
            s.transmission_tests = v.at("transmission_tests").get<int>();
        }
        cursor_ = state.at("cursor").get<Timestamp>();
        oauth_.restore(state.at("oauth"));
        retries_.clear();
        for (const auto& r : state.at("retries")) {
            Pending p{delivery_from(r.at("delivery")), r.at("vin").get<Vin>(), r.at("attempts").get<int>(),
                      r.at("next_attempt").get<Timestamp>()};
            retries_.emplace(p.next_attempt, std::move(p));
        }
        dead_.clear();
        for (const auto& d : state.at("dead_letters"))
            dead_.push_back({delivery_from(d.at("delivery")), d.at("attempts").get<int>(),
                             d.at("last_attempt").get<Timestamp>()});
        delivered_ = state.at("delivered").get<std::size_t>();
        attempts_ = state.at("attempts").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

} // namespace cvp::sim
