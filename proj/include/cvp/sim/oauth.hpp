#pragma once

#include "cvp/core/codec.hpp"

#include <map>
#include <string>

namespace cvp::sim {

struct AccessTokenGrant {
    std::string access_token;
    std::string refresh_token;
    Seconds expires_in{3600};
    DataPointKinds scope;

    bool operator==(const AccessTokenGrant&) const = default;
};

Json encode(const AccessTokenGrant& g);
AccessTokenGrant decode_grant(const Json& j);

/// Authorization server of the simulated OEM cloud. Codes are minted when
/// the driver approves on the OEM portal; tokens are deterministic in the
/// secret and the issue counter.
class OAuthServer {
public:
    explicit OAuthServer(std::string secret, Seconds token_lifetime = Seconds{3600});

    /// Driver approved data sharing for `vin` (clears an earlier revoke).
    std::string issue_code(const Vin& vin, const DataPointKinds& scope, Timestamp now);

    /// Throws InvalidGrant (unknown, used or expired code) or ConsentRevoked.
    AccessTokenGrant exchange_code(std::string_view code, Timestamp now);

    /// Single use: the old refresh and access tokens die with it.
    /// Throws InvalidGrant or ConsentRevoked.
    AccessTokenGrant refresh(std::string_view refresh_token, Timestamp now);

    struct TokenInfo {
        Vin vin;
        DataPointKinds scope;
        Timestamp expires_at;
    };

    /// Throws Unauthorized for unknown, expired or revoked tokens.
    const TokenInfo& authorize(std::string_view access_token, Timestamp now) const;

    /// Ends the OEM-side consent; every outstanding token stops working.
    void revoke(const Vin& vin);

    /// Approved and not revoked.
    bool consented(const Vin& vin) const;
    bool revoked(const Vin& vin) const;

    Json state() const;
    void restore(const Json& state);

private:
    struct Consent {
        DataPointKinds scope;
        bool revoked = false;
        int generation = 0; // bumps on every approval; older tokens die
    };
    struct Code {
        Vin vin;
        Timestamp expires_at;
        int generation;
    };
    struct Refresh {
        Vin vin;
        std::string access_token;
        int generation;
    };

    std::string mint(std::string_view kind, const Vin& vin);
    AccessTokenGrant issue(const Vin& vin, int generation, Timestamp now);
    const Consent& live_consent(const Vin& vin, int generation) const;

    std::string secret_;
    Seconds lifetime_;
    std::uint64_t counter_ = 0;
    std::map<Vin, Consent> consents_;
    std::map<std::string, Code> codes_;
    std::map<std::string, Refresh> refresh_;
    std::map<std::string, std::pair<TokenInfo, int>> access_;
};

} // namespace cvp::sim
