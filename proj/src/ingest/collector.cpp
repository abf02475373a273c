#include "cvp/ingest/collector.hpp"

#include "cvp/core/time_zone.hpp"

#include <algorithm>

namespace cvp::ingest {

std::string_view to_string(RequestOrigin o)
{
    switch (o) {
    case RequestOrigin::notification: return "notification";
    case RequestOrigin::poll: return "poll";
    case RequestOrigin::manual: return "manual";
    }
    return "?";
}

namespace {

RequestOrigin parse_origin(std::string_view s)
{
    for (auto o : {RequestOrigin::notification, RequestOrigin::poll, RequestOrigin::manual})
        if (to_string(o) == s)
            return o;
    throw Error(Errc::ParseError, "unknown request origin: " + std::string(s));
}

Json encode_request(const PendingRequest& r)
{
    Json j{{"id", r.id},
           {"vin", r.vin},
           {"kinds", r.kinds},
           {"origin", to_string(r.origin)},
           {"enqueued_at", r.enqueued_at},
           {"due", r.due},
           {"upstream_attempts", r.upstream_attempts},
           {"holds_permit", r.holds_permit},
           {"deferred", r.deferred}};
    if (r.deadline)
        j["deadline"] = *r.deadline;
    return j;
}

PendingRequest decode_request(const Json& j)
{
    PendingRequest r{j.at("id").get<std::uint64_t>(),
                     j.at("vin").get<Vin>(),
                     j.at("kinds").get<DataPointKinds>(),
                     parse_origin(j.at("origin").get<std::string>()),
                     j.at("enqueued_at").get<Timestamp>(),
                     j.at("due").get<Timestamp>(),
                     std::nullopt,
                     j.at("upstream_attempts").get<int>(),
                     j.value("holds_permit", false),
                     j.value("deferred", false)};
    if (j.contains("deadline"))
        r.deadline = j.at("deadline").get<Timestamp>();
    return r;
}

bool is_credential_error(Errc c)
{
    return c == Errc::Unauthorized || c == Errc::ConsentRevoked || c == Errc::InvalidGrant || c == Errc::NoConsent;
}

} // namespace

std::string_view to_string(RequestOutcome o)
{
    switch (o) {
    case RequestOutcome::executed: return "executed";
    case RequestOutcome::skipped_inactive: return "skipped_inactive";
    case RequestOutcome::deferred: return "deferred";
    case RequestOutcome::retry_scheduled: return "retry_scheduled";
    case RequestOutcome::failed: return "failed";
    case RequestOutcome::expired: return "expired";
    }
    return "?";
}

Collector::Collector(const ProfileRegistry& profiles, storage::StaticStore& vehicles, storage::SeriesStore& series,
                     consent::ConsentService& consents, CredentialVault& vault, AggregatorPort& aggregator,
                     const Clock& clock, Metrics& metrics, CollectorConfig config)
    : profiles_(profiles),
      vehicles_(vehicles),
      series_(series),
      consents_(consents),
      vault_(vault),
      aggregator_(aggregator),
      clock_(clock),
      metrics_(metrics),
      config_(config)
{
    if (config_.global_limit)
        global_.emplace(*config_.global_limit, TimeZone::utc(), config_.mirror_skew);
}

std::uint64_t Collector::enqueue(const Vin& vin, const DataPointKinds& kinds, RequestOrigin origin,
                                 std::optional<Timestamp> deadline)
{
    auto now = clock_.now();
    std::lock_guard lock(mutex_);
    PendingRequest r{next_id_++, vin, kinds, origin, now, now, deadline, 0, false};
    auto id = r.id;
    push(std::move(r));
    return id;
}

void Collector::push(PendingRequest req)
{
    Key key{req.due, req.id};
    queue_.insert_or_assign(key, std::move(req));
}

std::optional<Timestamp> Collector::next_due() const
{
    std::lock_guard lock(mutex_);
    if (queue_.empty())
        return std::nullopt;
    return queue_.begin()->first.due;
}

std::size_t Collector::pending() const
{
    std::lock_guard lock(mutex_);
    return queue_.size();
}

std::vector<PendingRequest> Collector::pending_requests() const
{
    std::lock_guard lock(mutex_);
    std::vector<PendingRequest> out;
    for (const auto& [key, r] : queue_)
        out.push_back(r);
    return out;
}

std::vector<RequestLogEntry> Collector::log() const
{
    std::lock_guard lock(mutex_);
    return log_;
}

int Collector::mirror_in_use(const Vin& vin, Timestamp now) const
{
    std::lock_guard lock(mutex_);
    auto it = mirrors_.find(vin);
    return it == mirrors_.end() ? 0 : it->second.in_use(now);
}

QuotaLimiter& Collector::mirror_locked(const Vin& vin, const Vehicle& vehicle)
{
    auto it = mirrors_.find(vin);
    if (it == mirrors_.end()) {
        const auto& profile = profiles_.profile_for(vehicle.brand);
        it = mirrors_.emplace(vin, QuotaLimiter(profile.quota, TimeZone::named(vehicle.time_zone), config_.mirror_skew))
                 .first;
    }
    return it->second;
}

std::size_t Collector::run_due(Timestamp now)
{
    std::size_t executed = 0;
    for (;;) {
        std::optional<PendingRequest> req;
        {
            std::lock_guard lock(mutex_);
            if (queue_.empty() || queue_.begin()->first.due > now)
                break;
            req.emplace(std::move(queue_.begin()->second));
            queue_.erase(queue_.begin());
        }
        process(std::move(*req), now, executed);
    }
    return executed;
}

void Collector::record(const PendingRequest& req, Timestamp now, RequestOutcome outcome, std::optional<Errc> error,
                       std::size_t stored)
{
    std::lock_guard lock(mutex_);
    log_.push_back(RequestLogEntry{req.id, req.vin, req.origin, now, outcome, error, stored});
}

void Collector::finish_slot(const PendingRequest& req, bool ok)
{
    if (req.origin == RequestOrigin::poll)
        metrics_.add(ok ? metric::slots_succeeded : metric::slots_failed);
}

void Collector::process(PendingRequest req, Timestamp now, std::size_t& executed)
{
    auto fail = [&](RequestOutcome outcome, std::optional<Errc> error) {
        record(req, now, outcome, error);
        finish_slot(req, false);
    };

    if (req.deadline && now > *req.deadline) {
        metrics_.add(metric::requests_expired);
        return fail(RequestOutcome::expired, std::nullopt);
    }
    if (!consents_.is_collection_permitted(req.vin)) {
        metrics_.add(metric::consent_inactive);
        return fail(RequestOutcome::skipped_inactive, Errc::ConsentInactive);
    }
    auto vehicle = vehicles_.vehicle(req.vin);
    if (!vehicle)
        return fail(RequestOutcome::failed, Errc::UnknownVin);
    const auto& profile = profiles_.profile_for(vehicle->brand);
    DataPointKinds kinds;
    std::copy_if(req.kinds.begin(), req.kinds.end(), std::inserter(kinds, kinds.end()),
                 [&](auto k) { return profile.request_kinds.count(k) != 0; });
    if (kinds.empty())
        return fail(RequestOutcome::failed, Errc::UnsupportedKind);

    if (!req.holds_permit) {
        std::lock_guard lock(mutex_);
        auto& mirror = mirror_locked(req.vin, *vehicle);
        auto free_at = mirror.next_available(now);
        if (global_)
            free_at = std::max(free_at, global_->next_available(now));
        if (free_at > now) {
            if (!req.deferred)
                metrics_.add(metric::quota_deferred);
            if (req.deadline && free_at > *req.deadline) {
                log_.push_back(RequestLogEntry{req.id, req.vin, req.origin, now, RequestOutcome::expired,
                                               Errc::QuotaDeferred, 0});
                metrics_.add(metric::requests_expired);
                finish_slot(req, false);
                return;
            }
            if (!req.deferred)
                log_.push_back(
                    RequestLogEntry{req.id, req.vin, req.origin, now, RequestOutcome::deferred, Errc::QuotaDeferred, 0});
            req.deferred = true;
            req.due = free_at;
            push(std::move(req));
            return;
        }
        mirror.try_acquire(now);
        if (global_)
            global_->try_acquire(now);
        req.holds_permit = true;
    }

    std::vector<TelemetrySample> samples;
    std::optional<Errc> error;
    try {
        auto token = vault_.access_token(req.vin);
        try {
            samples = aggregator_.fetch_data(req.vin, kinds, token);
        } catch (const Error& e) {
            if (e.code() != Errc::Unauthorized)
                throw;
            // Token died upstream before its advertised expiry.
            token = vault_.force_refresh(req.vin);
            samples = aggregator_.fetch_data(req.vin, kinds, token);
        }
    } catch (const Error& e) {
        error = e.code();
    }

    if (error == Errc::UpstreamError) {
        ++req.upstream_attempts;
        if (req.upstream_attempts <= config_.upstream_retries) {
            auto due = now + config_.upstream_backoff * (1 << (req.upstream_attempts - 1));
            if (!req.deadline || due <= *req.deadline) {
                metrics_.add(metric::upstream_retries);
                record(req, now, RequestOutcome::retry_scheduled, error);
                req.due = due;
                std::lock_guard lock(mutex_);
                push(std::move(req));
                return;
            }
        }
        metrics_.add(metric::upstream_failures);
        return fail(RequestOutcome::failed, error);
    }
    if (error == Errc::QuotaExceeded) {
        // The mirror should make this unreachable; back off a full window.
        metrics_.add(metric::upstream_429);
        record(req, now, RequestOutcome::deferred, error);
        req.due = now + profile.quota.window;
        req.holds_permit = false;
        if (req.deadline && req.due > *req.deadline) {
            finish_slot(req, false);
            return;
        }
        std::lock_guard lock(mutex_);
        push(std::move(req));
        return;
    }
    if (error) {
        if (is_credential_error(*error))
            metrics_.add(metric::credential_failures);
        return fail(RequestOutcome::failed, error);
    }

    // Consent may have been revoked while the call was in flight.
    if (!consents_.is_collection_permitted(req.vin)) {
        metrics_.add(metric::consent_inactive);
        return fail(RequestOutcome::skipped_inactive, Errc::ConsentInactive);
    }
    auto report = series_.append_samples(samples);
    metrics_.add(metric::samples_stored, report.written);
    metrics_.add(metric::requests_executed);
    record(req, now, RequestOutcome::executed, std::nullopt, report.written);
    finish_slot(req, true);
    ++executed;
}

Json Collector::state() const
{
    std::lock_guard lock(mutex_);
    Json queue = Json::array();
    for (const auto& [key, r] : queue_)
        queue.push_back(encode_request(r));
    Json mirrors = Json::object();
    for (const auto& [vin, m] : mirrors_)
        mirrors[vin.str()] = m.state();
    Json j{{"next_id", next_id_}, {"queue", queue}, {"mirrors", mirrors}};
    if (global_)
        j["global"] = global_->state();
    return j;
}

void Collector::restore(const Json& state)
{
    // Mirrors are rebuilt lazily from the vehicle record, then refilled.
    std::map<Vin, Json> mirror_states;
    {
        std::lock_guard lock(mutex_);
        try {
            next_id_ = state.at("next_id").get<std::uint64_t>();
            queue_.clear();
            for (const auto& r : state.at("queue"))
                push(decode_request(r));
            const Json& mirrors = state.at("mirrors");
            for (auto it = mirrors.begin(); it != mirrors.end(); ++it)
                mirror_states.emplace(Vin::parse(it.key()), it.value());
            if (global_ && state.contains("global"))
                global_->restore(state.at("global"));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ParseError, e.what());
        }
    }
    for (const auto& [vin, s] : mirror_states) {
        auto vehicle = vehicles_.vehicle(vin);
        if (!vehicle)
            continue;
        std::lock_guard lock(mutex_);
        mirrors_.erase(vin);
        mirror_locked(vin, *vehicle).restore(s);
    }
}

} // namespace cvp::ingest
