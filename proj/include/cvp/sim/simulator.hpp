#pragma once

#include "cvp/core/profile.hpp"
#include "cvp/core/quota.hpp"
#include "cvp/sim/oauth.hpp"
#include "cvp/sim/vehicle.hpp"
#include "cvp/sim/webhook.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace cvp::sim {

struct SimulatorConfig {
    Timestamp start{};
    int horizon_days = 200; // traces are generated this far ahead
    std::uint64_t seed = 42;
    Seconds token_lifetime{3600};
    std::string oauth_secret = "sim-oauth-secret";
    WebhookSecrets webhook_secrets;
    RetryPolicy retry;
};

/// One upstream data call as the OEM saw it.
struct DataCall {
    Timestamp at;
    Vin vin;
    DataPointKinds kinds;
    std::optional<Errc> error;
};

struct DeadLetter {
    WebhookDelivery delivery;
    int attempts = 0;
    Timestamp last_attempt;
};

/// The aggregator facade over the simulated OEM clouds: portal approval,
/// OAuth, the quota-limited data API and the webhook emitter. Thread-safe;
/// webhook deliveries are made without holding the lock so the receiving
/// platform may call back into the data API.
class OemSimulator {
public:
    OemSimulator(const ProfileRegistry& profiles, Clock& clock, SimulatorConfig config);

    /// Generates the vehicle's trace from (config, seed ^ vin).
    /// Throws UnknownBrand, InvalidConfig.
    void add_vehicle(const SimVehicleConfig& config);
    bool has_vehicle(const Vin& vin) const;
    /// Throws UnknownVehicle.
    const SimVehicle& vehicle(const Vin& vin) const;
    std::vector<Vin> vins() const;
    const OemProfile& profile_of(const Vin& vin) const;

    /// Replaces the vehicle's fault plan (scripted events already in the
    /// past are ignored).
    void set_fault_plan(const Vin& vin, FaultPlan plan);

    void set_sink(WebhookSink* sink);

    // --- aggregator / OAuth ------------------------------------------------

    /// The driver approved on the OEM portal; returns an authorization code
    /// scoped to the profile's request kinds.
    std::string approve(const Vin& vin);
    AccessTokenGrant exchange_code(std::string_view code);
    AccessTokenGrant refresh(std::string_view refresh_token);
    /// Platform-side revoke (driver portal). Idempotent.
    void revoke(const Vin& vin);
    bool consented(const Vin& vin) const;

    /// Throws Unauthorized, UnsupportedKind, UpstreamError, QuotaExceeded.
    std::vector<TelemetrySample> fetch_data(const Vin& vin, const DataPointKinds& kinds, std::string_view token);

    // --- consent-step hooks ------------------------------------------------

    PrivacyMechanism privacy_mechanism(const Vin& vin) const;
    /// The first fault_plan.transmission_test_failures calls fail.
    bool transmission_test(const Vin& vin);
    int trips_between(const Vin& vin, Timestamp from, Timestamp to) const;

    // --- emitter -----------------------------------------------------------

    /// Earliest pending emission or retry.
    std::optional<Timestamp> next_due() const;
    /// Emits and (re)delivers everything due at or before `now`.
    void run_due(Timestamp now);
    /// Standalone stepping: requires the clock to be a SimClock.
    void advance(Millis d);

    std::vector<DataCall> call_log() const;
    std::vector<DeadLetter> dead_letters() const;
    std::size_t delivered_count() const;
    std::size_t attempt_count() const;

    Json state() const;
    void restore(const Json& state);

private:
    struct Pending {
        WebhookDelivery delivery;
        Vin vin;
        int attempts = 0;
        Timestamp next_attempt;
    };

    struct Slot {
        std::unique_ptr<SimVehicle> vehicle;
        std::vector<Emission> emissions;
        QuotaLimiter quota;
        int transmission_tests = 0;
    };

    Slot& slot(const Vin& vin);
    const Slot& slot(const Vin& vin) const;
    std::optional<Timestamp> next_emission_locked() const;
    void attempt(Pending p, Timestamp now);

    const ProfileRegistry& profiles_;
    Clock& clock_;
    SimulatorConfig config_;
    OAuthServer oauth_;
    WebhookSink* sink_ = nullptr;

    mutable std::mutex mutex_;
    std::map<Vin, Slot> slots_;
    Timestamp cursor_; // emissions at or before this instant are done
    std::multimap<Timestamp, Pending> retries_;
    std::vector<DeadLetter> dead_;
    std::vector<DataCall> calls_;
    std::size_t delivered_ = 0;
    std::size_t attempts_ = 0;
};

} // namespace cvp::sim
