#pragma once

#include "cvp/core/types.hpp"
#include "cvp/sim/oauth.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace cvp::sim {
class OemSimulator;
}

namespace cvp::ingest {

using sim::AccessTokenGrant;

/// The third-party aggregator API as the platform sees it. Errors surface
/// as cvp::Error with the upstream code (Unauthorized, QuotaExceeded, ...).
class AggregatorPort {
public:
    virtual ~AggregatorPort() = default;

    /// Driver approval on the OEM portal; returns the authorization code.
    virtual std::string approve(const Vin& vin) = 0;
    virtual AccessTokenGrant exchange_code(std::string_view code) = 0;
    virtual AccessTokenGrant refresh(std::string_view refresh_token) = 0;
    virtual void revoke(const Vin& vin) = 0;
    virtual std::vector<TelemetrySample> fetch_data(const Vin& vin, const DataPointKinds& kinds,
                                                    std::string_view access_token) = 0;
};

/// Direct calls into an in-process simulator.
class InProcessAggregator final : public AggregatorPort {
public:
    explicit InProcessAggregator(sim::OemSimulator& sim) : sim_(sim) {}

    std::string approve(const Vin& vin) override;
    AccessTokenGrant exchange_code(std::string_view code) override;
    AccessTokenGrant refresh(std::string_view refresh_token) override;
    void revoke(const Vin& vin) override;
    std::vector<TelemetrySample> fetch_data(const Vin& vin, const DataPointKinds& kinds,
                                            std::string_view access_token) override;

private:
    sim::OemSimulator& sim_;
};

} // namespace cvp::ingest
