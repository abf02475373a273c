#include "cvp/ingest/credentials.hpp"

namespace cvp::ingest {

CredentialVault::CredentialVault(AggregatorPort& aggregator, const Clock& clock, Metrics& metrics,
                                 Millis refresh_margin)
    : aggregator_(aggregator), clock_(clock), metrics_(metrics), refresh_margin_(refresh_margin)
{
}

consent::CredentialRefs CredentialVault::refs_of(const Vin& vin, const Entry& e)
{
    auto gen = std::to_string(e.generation);
    return {"vault:" + vin.str() + ":access:" + gen, "vault:" + vin.str() + ":refresh:" + gen};
}

consent::CredentialRefs CredentialVault::establish(const Vin& vin)
{
    auto code = aggregator_.approve(vin);
    auto grant = aggregator_.exchange_code(code);
    std::lock_guard lock(mutex_);
    Entry e{std::move(grant), clock_.now(), ++generation_};
    auto refs = refs_of(vin, e);
    entries_.insert_or_assign(vin, std::move(e));
    return refs;
}

void CredentialVault::invalidate(const Vin& vin, consent::RevokeSource source)
{
    {
        std::lock_guard lock(mutex_);
        entries_.erase(vin);
    }
    // The OEM already knows about revocations it notified us of.
    if (source == consent::RevokeSource::driver_portal)
        aggregator_.revoke(vin);
}

bool CredentialVault::has(const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    return entries_.count(vin) != 0;
}

std::string CredentialVault::refresh_locked(Entry& e)
{
    auto grant = aggregator_.refresh(e.grant.refresh_token);
    e.grant = std::move(grant);
    e.obtained_at = clock_.now();
    e.generation = ++generation_;
    metrics_.add(metric::token_refreshes);
    return e.grant.access_token;
}

std::string CredentialVault::access_token(const Vin& vin)
{
    std::lock_guard lock(mutex_);
    auto it = entries_.find(vin);
    if (it == entries_.end())
        throw Error(Errc::NoConsent, "no credentials for " + vin.str());
    Entry& e = it->second;
    auto expires_at = e.obtained_at + std::chrono::duration_cast<Millis>(e.grant.expires_in);
    if (clock_.now() + refresh_margin_ >= expires_at)
        return refresh_locked(e);
    return e.grant.access_token;
}

std::string CredentialVault::force_refresh(const Vin& vin)
{
    std::lock_guard lock(mutex_);
    auto it = entries_.find(vin);
    if (it == entries_.end())
        throw Error(Errc::NoConsent, "no credentials for " + vin.str());
    return refresh_locked(it->second);
}

consent::CredentialRefs CredentialVault::refs(const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    auto it = entries_.find(vin);
    if (it == entries_.end())
        throw Error(Errc::NoConsent, "no credentials for " + vin.str());
    return refs_of(vin, it->second);
}

Json CredentialVault::state() const
{
    std::lock_guard lock(mutex_);
    Json entries = Json::array();
    for (const auto& [vin, e] : entries_)
        entries.push_back({{"vin", vin},
                           {"grant", sim::encode(e.grant)},
                           {"obtained_at", e.obtained_at},
                           {"generation", e.generation}});
    return {{"generation", generation_}, {"entries", entries}};
}

void CredentialVault::restore(const Json& state)
{
    std::lock_guard lock(mutex_);
    try {
        entries_.clear();
        generation_ = state.at("generation").get<std::uint64_t>();
        for (const auto& e : state.at("entries"))
            entries_.insert_or_assign(e.at("vin").get<Vin>(),
                                      Entry{sim::decode_grant(e.at("grant")), e.at("obtained_at").get<Timestamp>(),
                                            e.at("generation").get<std::uint64_t>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

} // namespace cvp::ingest
