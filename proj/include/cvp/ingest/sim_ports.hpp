#pragma once

#include "cvp/consent/consent.hpp"
#include "cvp/sim/simulator.hpp"

namespace cvp::ingest {

/// Consent-step facts answered by an in-process simulator.
class SimVehiclePort final : public consent::VehiclePort {
public:
    SimVehiclePort(sim::OemSimulator& sim, const Clock& clock) : sim_(sim), clock_(clock) {}

    PrivacyMechanism privacy_mechanism(const Vin& vin) const override { return sim_.privacy_mechanism(vin); }
    bool transmission_test(const Vin& vin, Timestamp, Millis) override { return sim_.transmission_test(vin); }
    int trips_since(const Vin& vin, Timestamp since) const override
    {
        return sim_.trips_between(vin, since, clock_.now());
    }

private:
    sim::OemSimulator& sim_;
    const Clock& clock_;
};

} // namespace cvp::ingest
