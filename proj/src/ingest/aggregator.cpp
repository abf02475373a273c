#include "cvp/ingest/aggregator.hpp"

#include "cvp/sim/simulator.hpp"

namespace cvp::ingest {

std::string InProcessAggregator::approve(const Vin& vin) { return sim_.approve(vin); }

AccessTokenGrant InProcessAggregator::exchange_code(std::string_view code) { return sim_.exchange_code(code); }

AccessTokenGrant InProcessAggregator::refresh(std::string_view refresh_token) { return sim_.refresh(refresh_token); }

void InProcessAggregator::revoke(const Vin& vin) { sim_.revoke(vin); }

std::vector<TelemetrySample> InProcessAggregator::fetch_data(const Vin& vin, const DataPointKinds& kinds,
                                                             std::string_view access_token)
{
    return sim_.fetch_data(vin, kinds, access_token);
}

} // namespace cvp::ingest
