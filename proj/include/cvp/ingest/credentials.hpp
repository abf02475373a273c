#pragma once

#include "cvp/consent/consent.hpp"
#include "cvp/ingest/aggregator.hpp"
#include "cvp/ingest/metrics.hpp"

#include <map>
#include <mutex>

namespace cvp::ingest {

/// Holds the OAuth secrets behind the references stored on consent records.
/// Tokens are refreshed before use once they are within `refresh_margin`
/// of expiry.
class CredentialVault final : public consent::CredentialPort {
public:
    CredentialVault(AggregatorPort& aggregator, const Clock& clock, Metrics& metrics,
                    Millis refresh_margin = std::chrono::seconds{60});

    consent::CredentialRefs establish(const Vin& vin) override;
    /// Drops the secrets; a driver-portal revoke is also sent upstream.
    void invalidate(const Vin& vin, consent::RevokeSource source) override;

    bool has(const Vin& vin) const;
    /// A usable access token. Throws NoConsent when nothing is held,
    /// ConsentRevoked / InvalidGrant when the refresh is refused.
    std::string access_token(const Vin& vin);
    /// Refresh regardless of expiry (after an upstream Unauthorized).
    std::string force_refresh(const Vin& vin);
    consent::CredentialRefs refs(const Vin& vin) const;

    Json state() const;
    void restore(const Json& state);

private:
    struct Entry {
        AccessTokenGrant grant;
        Timestamp obtained_at;
        std::uint64_t generation = 0;
    };

    std::string refresh_locked(Entry& e);
    static consent::CredentialRefs refs_of(const Vin& vin, const Entry& e);

    AggregatorPort& aggregator_;
    const Clock& clock_;
    Metrics& metrics_;
    Millis refresh_margin_;

    mutable std::mutex mutex_;
    std::map<Vin, Entry> entries_;
    std::uint64_t generation_ = 0;
};

} // namespace cvp::ingest
