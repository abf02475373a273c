#pragma once

#include "cvp/core/codec.hpp"
#include "cvp/core/profile.hpp"
#include "cvp/core/time.hpp"
#include "cvp/core/types.hpp"
#include "cvp/storage/static_store.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cvp::consent {

enum class ConsentState {
    Initiated,
    EmailSent,
    AwaitingOemConfirmation,
    IdentityVerification,
    PrivacySettings,
    TransmissionTest,
    BackgroundProcessing,
    AwaitingOdometerReport,
    Active,
    Expired,
    Revoked,
};

enum class Action {
    send_email,
    open_link,
    confirm_approved,
    confirm_rejected,
    identity_passed,
    privacy_configured,
    transmission_passed,
    background_completed,
    report_odometer,
    expire,
    revoke,
};

enum class RevokeSource { driver_portal, oem_notification };

std::string_view to_string(ConsentState s);
std::string_view to_string(Action a);
std::string_view to_string(RevokeSource s);
ConsentState parse_consent_state(std::string_view s);
Action parse_action(std::string_view s);
RevokeSource parse_revoke_source(std::string_view s);

struct Edge {
    ConsentVariant variant;
    ConsentState from;
    Action action;
    ConsentState to;
};

/// Every legal state change. Failed attempts (identity, transmission test,
/// mechanism mismatch) and renewals from Active leave the state as is and
/// are not edges.
const std::vector<Edge>& edges();

std::optional<ConsentState> next_state(ConsentVariant variant, ConsentState from, Action action);

/// States the variant can ever be in.
std::vector<ConsentState> states_of(ConsentVariant variant);

struct Transition {
    ConsentState from;
    ConsentState to;
    Action action;
    Timestamp at;

    bool operator==(const Transition&) const = default;
};

struct ConsentRecord {
    explicit ConsentRecord(Vin v) : vin(std::move(v)) {}

    Vin vin;
    std::string driver_email;
    ConsentState state = ConsentState::Initiated;
    ConsentVariant variant = ConsentVariant::SimplePortal;
    Timestamp created_at{};
    std::optional<Timestamp> granted_at;
    std::string access_token;  // credential references, never secrets
    std::string refresh_token;
    std::optional<Timestamp> last_odometer_report_at;
    std::optional<double> last_reported_km;
    int identity_failures = 0;
    bool support_flag = false;
    std::optional<PrivacyMechanism> privacy_mechanism;
    std::optional<Timestamp> transmission_started_at;
    std::optional<Timestamp> transmission_finished_at;
    std::optional<std::string> advisory;
    std::optional<Timestamp> background_started_at;
    std::optional<Timestamp> revoked_at;
    std::optional<RevokeSource> revoke_source;
    std::string link_nonce;  // empty once the link was used
    std::optional<Timestamp> link_expires_at;
    std::vector<Transition> history;

    bool operator==(const ConsentRecord&) const = default;
};

struct ConsentConfig {
    Millis link_validity = std::chrono::hours{72};
    Millis transmission_test_duration = std::chrono::minutes{6};
    Millis background_min = std::chrono::days{3};
    Millis report_validity = std::chrono::days{90};
    int identity_retry_limit = 3;
    std::string link_secret = "consent-link-secret";
    std::string link_base_url = "http://localhost:8080/consent";
};

/// Stellantis-like records need an odometer report within `report_validity`.
std::optional<Timestamp> odometer_report_due_at(const ConsentRecord& r, const ConsentConfig& config);

/// Active, and for the complex variant the last odometer report is recent
/// enough.
bool is_collection_permitted(const ConsentRecord& r, Timestamp now, const ConsentConfig& config);

Json encode_record(const ConsentRecord& r, const ConsentConfig& config = {});
ConsentRecord decode_record(const Json& j);

// Ports

class EligibilityGate {
public:
    virtual ~EligibilityGate() = default;
    virtual bool eligible(const Vin& vin) const = 0;
};

struct Email {
    std::string to;
    std::string subject;
    std::string body;
    std::optional<std::string> link;
    Timestamp at{};
};

class Mailer {
public:
    virtual ~Mailer() = default;
    virtual void send(const Email& email) = 0;
};

class MemoryMailer final : public Mailer {
public:
    void send(const Email& email) override
    {
        std::lock_guard lock(mutex_);
        sent_.push_back(email);
    }
    std::vector<Email> sent() const
    {
        std::lock_guard lock(mutex_);
        return sent_;
    }

private:
    mutable std::mutex mutex_;
    std::vector<Email> sent_;
};

/// Dev transport: one human-readable block per email.
class StreamMailer final : public Mailer {
public:
    explicit StreamMailer(std::ostream& out) : out_(out) {}
    void send(const Email& email) override;

private:
    std::mutex mutex_;
    std::ostream& out_;
};

/// Appends one JSON object per email to `path` (an outbox file).
class FileMailer final : public Mailer {
public:
    explicit FileMailer(std::filesystem::path path) : path_(std::move(path)) {}
    void send(const Email& email) override;

private:
    std::mutex mutex_;
    std::filesystem::path path_;
};

/// Facts only the OEM side knows about a vehicle.
class VehiclePort {
public:
    virtual ~VehiclePort() = default;
    virtual PrivacyMechanism privacy_mechanism(const Vin& vin) const = 0;
    /// Whether a transmission test started at `start` succeeds.
    virtual bool transmission_test(const Vin& vin, Timestamp start, Millis duration) = 0;
    virtual int trips_since(const Vin& vin, Timestamp since) const = 0;
};

struct CredentialRefs {
    std::string access_token;
    std::string refresh_token;
};

/// OAuth handoff. The implementation keeps the secrets; consent records
/// only hold the returned references.
class CredentialPort {
public:
    virtual ~CredentialPort() = default;
    virtual CredentialRefs establish(const Vin& vin) = 0;
    virtual void invalidate(const Vin& vin, RevokeSource source) = 0;
};

using OdometerLookup = std::function<std::optional<double>(const Vin&)>;

/// Owns every ConsentRecord. All mutations of a record go through one lock,
/// including the sweeper and webhook-driven revocation. Records are
/// persisted to the static store's consents collection on each change.
class ConsentService {
public:
    using Listener = std::function<void(const ConsentRecord&)>;

    ConsentService(storage::StaticStore& store, const ProfileRegistry& profiles, const EligibilityGate& eligibility,
                   Mailer& mailer, VehiclePort& vehicles, CredentialPort& credentials, Clock& clock,
                   ConsentConfig config = {});

    /// Latest stored odometer, used to reject regressing reports.
    void set_odometer_lookup(OdometerLookup lookup) { odometer_lookup_ = std::move(lookup); }

    /// Called after every state change, outside the service lock.
    void subscribe(Listener listener);

    ConsentRecord initiate(const Vin& vin, const std::string& driver_email);
    /// Issues a fresh link for a record still in EmailSent; the old one dies.
    ConsentRecord resend_link(const Vin& vin);
    ConsentRecord open_link(const std::string& token);
    ConsentRecord confirm_on_oem_portal(const Vin& vin, bool approved);
    ConsentRecord verify_identity(const Vin& vin, bool passed);
    PrivacyMechanism lookup_mechanism(const Vin& vin) const;
    ConsentRecord configure_privacy_settings(const Vin& vin, PrivacyMechanism mechanism);
    ConsentRecord run_transmission_test(const Vin& vin);
    ConsentRecord complete_background_processing(const Vin& vin);
    ConsentRecord report_odometer(const Vin& vin, double km, Timestamp at);
    ConsentRecord revoke(const Vin& vin, RevokeSource source);

    /// Hourly housekeeping: expires stale complex-variant consents and
    /// finishes background processing that is due. Returns changed records.
    std::vector<ConsentRecord> sweep();

    std::optional<ConsentRecord> record(const Vin& vin);
    std::vector<ConsentRecord> records();
    bool is_collection_permitted(const Vin& vin);

    /// The still-unused link of a record in EmailSent (headless CLI steps).
    std::optional<std::string> last_link(const Vin& vin) const;

    const ConsentConfig& config() const { return config_; }

private:
    ConsentRecord& require_locked(const Vin& vin);
    void transition_locked(ConsentRecord& r, Action action, std::vector<ConsentRecord>& changed);
    void expire_if_due_locked(ConsentRecord& r, std::vector<ConsentRecord>& changed);
    void issue_link_locked(ConsentRecord& r);
    void persist_locked(const ConsentRecord& r);
    void notify(const std::vector<ConsentRecord>& changed);
    void mail(const ConsentRecord& r, std::string subject, std::string body, std::optional<std::string> link = {});

    storage::StaticStore& store_;
    const ProfileRegistry& profiles_;
    const EligibilityGate& eligibility_;
    Mailer& mailer_;
    VehiclePort& vehicles_;
    CredentialPort& credentials_;
    Clock& clock_;
    ConsentConfig config_;
    OdometerLookup odometer_lookup_;

    mutable std::mutex mutex_;
    std::map<Vin, ConsentRecord> records_;
    std::vector<Listener> listeners_;
};

} // namespace cvp::consent
