#pragma once

#include "cvp/consent/consent.hpp"
#include "cvp/eligibility/eligibility.hpp"
#include "cvp/ingest/aggregator.hpp"
#include "cvp/ingest/collector.hpp"
#include "cvp/ingest/credentials.hpp"
#include "cvp/ingest/metrics.hpp"
#include "cvp/ingest/poll_scheduler.hpp"
#include "cvp/ingest/policy.hpp"
#include "cvp/ingest/webhook_receiver.hpp"
#include "cvp/sim/simulator.hpp"
#include "cvp/storage/series_store.hpp"
#include "cvp/storage/static_store.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cvp::platform {

/// One enrolled car: the platform's record of it and its simulated twin.
struct FleetVehicle {
    explicit FleetVehicle(sim::SimVehicleConfig s) : sim(std::move(s)) {}

    sim::SimVehicleConfig sim;
    std::string model = "unknown";
    int production_year = 2020;
    std::string purchase_country = "LU";
    bool fidelity_program_member = true;
    bool oem_eligible = true; // the OEM's VIN-check answer
    std::string driver_email = "driver@example.com";

    Vehicle vehicle() const;
};

Json encode(const FleetVehicle& v);
FleetVehicle decode_fleet_vehicle(const Json& j);

struct PlatformConfig {
    Timestamp start{};
    std::uint64_t seed = 42;
    int horizon_days = 200;
    std::vector<sim::TimeWindow> downtime; // the platform is unreachable
    ingest::CollectorConfig collector;
    consent::ConsentConfig consent;
    eligibility::ReviewDelay review;
    Millis housekeeping_every = std::chrono::hours{1};
    std::optional<Json> rules;    // {"rules": [...]}; permissive defaults otherwise
    std::optional<Json> policies; // {"policies": [...]}
    std::optional<Json> profiles; // {"profiles": [...]}; built-ins otherwise
    /// File-backed stores under this directory; memory otherwise.
    std::optional<std::filesystem::path> data_dir;
};

Json encode(const PlatformConfig& c);
PlatformConfig decode_platform_config(const Json& j);

/// Requirement rules accepting any model, country and year >= 2018 for every
/// brand; complex-variant brands get manual review.
eligibility::RuleSet default_rules(const ProfileRegistry& profiles);

/// Consent gate backed by the eligibility outcomes.
class OutcomeGate final : public consent::EligibilityGate {
public:
    explicit OutcomeGate(const eligibility::EligibilityService& service) : service_(service) {}
    bool eligible(const Vin& vin) const override;

private:
    const eligibility::EligibilityService& service_;
};

/// The whole system on one simulated timeline: the OEM simulator, the
/// eligibility, consent and ingestion services and both stores. run_until
/// is a discrete-event loop over the webhook emitter, the poll scheduler,
/// the request queue and hourly housekeeping (consent sweep, manual-review
/// resolution).
class Platform {
public:
    explicit Platform(PlatformConfig config);
    ~Platform();

    Platform(const Platform&) = delete;
    Platform& operator=(const Platform&) = delete;

    /// Registers the car with the simulator and the static store and runs
    /// the eligibility check.
    eligibility::EligibilityOutcome enroll(const FleetVehicle& v);

    /// Drives the consent flow headlessly as the driver would, advancing
    /// simulated time where the flow waits (transmission test, background
    /// processing). Gives up after `patience` and returns the record as is.
    consent::ConsentRecord activate(const Vin& vin, Millis patience = std::chrono::days{30});

    void run_until(Timestamp until);
    void advance(Millis d) { run_until(now() + d); }
    Timestamp now() const { return clock_.now(); }

    bool down(Timestamp t) const;

    /// The address given at enrollment.
    std::optional<std::string> driver_email(const Vin& vin) const;

    /// Replaces the upstream client (networked mode). The port must outlive
    /// the platform.
    void set_aggregator(ingest::AggregatorPort* port);
    /// Replaces the webhook path from the simulator (networked mode).
    void set_webhook_sink(sim::WebhookSink* sink);

    /// Serializes run_until against other mutating callers (HTTP handlers).
    std::recursive_mutex& mutex() { return run_mutex_; }

    const PlatformConfig& config() const { return config_; }
    const ProfileRegistry& profiles() const { return profiles_; }
    SimClock& clock() { return clock_; }
    sim::OemSimulator& simulator() { return *sim_; }
    storage::StaticStore& statics() { return *statics_; }
    storage::SeriesStore& series() { return *series_; }
    const storage::SeriesStore& series() const { return *series_; }
    eligibility::EligibilityService& eligibility() { return *eligibility_; }
    consent::ConsentService& consents() { return *consents_; }
    consent::MemoryMailer& mailer() { return mailer_; }
    ingest::CredentialVault& vault() { return *vault_; }
    ingest::Collector& collector() { return *collector_; }
    ingest::PolicySet& policies() { return *policies_; }
    ingest::WebhookReceiver& receiver() { return *receiver_; }
    ingest::PollScheduler& scheduler() { return *scheduler_; }
    ingest::Metrics& metrics() { return metrics_; }
    const ingest::Metrics& metrics() const { return metrics_; }

    /// Everything not already in the stores, for resuming in a later process.
    Json state() const;
    void restore(const Json& state);

    /// Canonical dump of both stores: the static snapshot as one JSON line,
    /// then the series export.
    std::string export_all() const;

private:
    class Upstream;
    class DirectSink;

    void housekeeping(Timestamp now);
    void persist_outcome(const eligibility::EligibilityOutcome& o);

    PlatformConfig config_;
    ProfileRegistry profiles_;
    SimClock clock_;
    std::unique_ptr<storage::StaticStore> statics_;
    std::unique_ptr<storage::SeriesStore> series_;
    std::unique_ptr<sim::OemSimulator> sim_;
    eligibility::VinTable vin_table_;
    std::map<Vin, std::string> emails_;
    std::unique_ptr<eligibility::EligibilityService> eligibility_;
    std::unique_ptr<OutcomeGate> gate_;
    consent::MemoryMailer mailer_;
    std::unique_ptr<Upstream> upstream_;
    ingest::Metrics metrics_;
    std::unique_ptr<ingest::CredentialVault> vault_;
    std::unique_ptr<consent::ConsentService> consents_;
    std::unique_ptr<ingest::Collector> collector_;
    std::unique_ptr<ingest::PolicySet> policies_;
    std::unique_ptr<ingest::WebhookReceiver> receiver_;
    std::unique_ptr<ingest::PollScheduler> scheduler_;
    std::unique_ptr<DirectSink> direct_sink_;
    Timestamp next_housekeeping_;
    std::recursive_mutex run_mutex_;
};

} // namespace cvp::platform
