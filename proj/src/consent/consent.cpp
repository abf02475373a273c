#include "cvp/consent/consent.hpp"

#include "cvp/core/crypto.hpp"
#include "cvp/core/error.hpp"

#include <algorithm>
#include <sstream>

namespace cvp::consent {

using S = ConsentState;
using A = Action;

namespace {

constexpr std::array kStateNames{
    "Initiated",    "EmailSent",            "AwaitingOemConfirmation", "IdentityVerification",
    "PrivacySettings", "TransmissionTest",  "BackgroundProcessing",    "AwaitingOdometerReport",
    "Active",       "Expired",              "Revoked",
};

constexpr std::array kActionNames{
    "send_email",          "open_link",           "confirm_approved",     "confirm_rejected",
    "identity_passed",     "privacy_configured",  "transmission_passed",  "background_completed",
    "report_odometer",     "expire",              "revoke",
};

template <typename E, std::size_t N>
E parse_enum(const std::array<const char*, N>& names, std::string_view s, const char* what)
{
    for (std::size_t i = 0; i < N; ++i)
        if (s == names[i])
            return static_cast<E>(i);
    throw Error(Errc::ParseError, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

std::vector<Edge> build_edges()
{
    constexpr auto simple = ConsentVariant::SimplePortal;
    constexpr auto complex = ConsentVariant::StellantisComplex;
    std::vector<Edge> e{
        {simple, S::Initiated, A::send_email, S::EmailSent},
        {simple, S::EmailSent, A::open_link, S::AwaitingOemConfirmation},
        {simple, S::AwaitingOemConfirmation, A::confirm_approved, S::Active},
        {simple, S::AwaitingOemConfirmation, A::confirm_rejected, S::Revoked},

        {complex, S::Initiated, A::send_email, S::EmailSent},
        {complex, S::EmailSent, A::open_link, S::IdentityVerification},
        {complex, S::IdentityVerification, A::identity_passed, S::PrivacySettings},
        {complex, S::PrivacySettings, A::privacy_configured, S::TransmissionTest},
        {complex, S::TransmissionTest, A::transmission_passed, S::BackgroundProcessing},
        {complex, S::BackgroundProcessing, A::background_completed, S::AwaitingOdometerReport},
        {complex, S::AwaitingOdometerReport, A::report_odometer, S::Active},
        {complex, S::Active, A::expire, S::Expired},
        {complex, S::Expired, A::report_odometer, S::Active},
    };
    for (auto variant : {simple, complex})
        for (auto from : states_of(variant))
            if (from != S::Revoked)
                e.push_back({variant, from, A::revoke, S::Revoked});
    return e;
}

std::string format_km(double km)
{
    std::ostringstream out;
    out << km;
    return out.str();
}

struct LinkToken {
    Vin vin;
    std::int64_t expires_ms;
    std::string nonce;
};

std::string link_payload(const Vin& vin, std::int64_t expires_ms, const std::string& nonce)
{
    return vin.str() + "." + std::to_string(expires_ms) + "." + nonce;
}

std::string sign_link(const std::string& secret, const Vin& vin, std::int64_t expires_ms, const std::string& nonce)
{
    auto payload = link_payload(vin, expires_ms, nonce);
    return payload + "." + hmac_sha256_hex(secret, payload);
}

LinkToken verify_link(const std::string& secret, const std::string& token)
{
    auto bad = [] { return Error(Errc::InvalidLink, "malformed or forged consent link"); };
    auto last = token.rfind('.');
    if (last == std::string::npos)
        throw bad();
    auto payload = token.substr(0, last);
    if (!constant_time_equal(hmac_sha256_hex(secret, payload), token.substr(last + 1)))
        throw bad();
    auto p1 = payload.find('.');
    auto p2 = payload.find('.', p1 + 1);
    if (p1 == std::string::npos || p2 == std::string::npos)
        throw bad();
    try {
        return LinkToken{Vin::parse(payload.substr(0, p1)), std::stoll(payload.substr(p1 + 1, p2 - p1 - 1)),
                         payload.substr(p2 + 1)};
    } catch (const std::exception&) {
        throw bad();
    }
}

} // namespace

std::string_view to_string(ConsentState s) { return kStateNames.at(static_cast<std::size_t>(s)); }
std::string_view to_string(Action a) { return kActionNames.at(static_cast<std::size_t>(a)); }

std::string_view to_string(RevokeSource s)
{
    return s == RevokeSource::driver_portal ? "driver_portal" : "oem_notification";
}

ConsentState parse_consent_state(std::string_view s) { return parse_enum<ConsentState>(kStateNames, s, "consent state"); }
Action parse_action(std::string_view s) { return parse_enum<Action>(kActionNames, s, "consent action"); }

RevokeSource parse_revoke_source(std::string_view s)
{
    if (s == "driver_portal")
        return RevokeSource::driver_portal;
    if (s == "oem_notification")
        return RevokeSource::oem_notification;
    throw Error(Errc::ParseError, "unknown revoke source '" + std::string(s) + "'");
}

const std::vector<Edge>& edges()
{
    static const auto all = build_edges();
    return all;
}

std::optional<ConsentState> next_state(ConsentVariant variant, ConsentState from, Action action)
{
    for (const auto& e : edges())
        if (e.variant == variant && e.from == from && e.action == action)
            return e.to;
    return std::nullopt;
}

std::vector<ConsentState> states_of(ConsentVariant variant)
{
    if (variant == ConsentVariant::SimplePortal)
        return {S::Initiated, S::EmailSent, S::AwaitingOemConfirmation, S::Active, S::Revoked};
    return {S::Initiated,         S::EmailSent,           S::IdentityVerification, S::PrivacySettings,
            S::TransmissionTest,  S::BackgroundProcessing, S::AwaitingOdometerReport, S::Active,
            S::Expired,           S::Revoked};
}

std::optional<Timestamp> odometer_report_due_at(const ConsentRecord& r, const ConsentConfig& config)
{
    if (r.variant != ConsentVariant::StellantisComplex || !r.last_odometer_report_at)
        return std::nullopt;
    return *r.last_odometer_report_at + config.report_validity;
}

bool is_collection_permitted(const ConsentRecord& r, Timestamp now, const ConsentConfig& config)
{
    if (r.state != S::Active)
        return false;
    if (r.variant == ConsentVariant::StellantisComplex)
        return r.last_odometer_report_at && now - *r.last_odometer_report_at <= config.report_validity;
    return true;
}

namespace {

template <typename T>
void put_opt(Json& j, const char* key, const std::optional<T>& v)
{
    if (v)
        j[key] = *v;
    else
        j[key] = nullptr;
}

template <typename T>
std::optional<T> get_opt(const Json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
    return j.at(key).get<T>();
}

} // namespace

Json encode_record(const ConsentRecord& r, const ConsentConfig& config)
{
    Json j{{"vin", r.vin},
           {"driver_email", r.driver_email},
           {"state", to_string(r.state)},
           {"variant", to_string(r.variant)},
           {"created_at", r.created_at},
           {"access_token", r.access_token},
           {"refresh_token", r.refresh_token},
           {"identity_failures", r.identity_failures},
           {"support_flag", r.support_flag},
           {"link_nonce", r.link_nonce}};
    put_opt(j, "granted_at", r.granted_at);
    put_opt(j, "last_odometer_report_at", r.last_odometer_report_at);
    put_opt(j, "odometer_report_due_at", odometer_report_due_at(r, config));
    put_opt(j, "last_reported_km", r.last_reported_km);
    j["privacy_mechanism"] = r.privacy_mechanism ? Json(to_string(*r.privacy_mechanism)) : Json(nullptr);
    put_opt(j, "transmission_started_at", r.transmission_started_at);
    put_opt(j, "transmission_finished_at", r.transmission_finished_at);
    put_opt(j, "advisory", r.advisory);
    put_opt(j, "background_started_at", r.background_started_at);
    put_opt(j, "revoked_at", r.revoked_at);
    j["revoke_source"] = r.revoke_source ? Json(to_string(*r.revoke_source)) : Json(nullptr);
    put_opt(j, "link_expires_at", r.link_expires_at);
    Json history = Json::array();
    for (const auto& t : r.history)
        history.push_back({{"from", to_string(t.from)}, {"to", to_string(t.to)}, {"action", to_string(t.action)},
                           {"at", t.at}});
    j["history"] = history;
    return j;
}

ConsentRecord decode_record(const Json& j)
{
    try {
        ConsentRecord r(j.at("vin").get<Vin>());
        r.driver_email = j.at("driver_email").get<std::string>();
        r.state = parse_consent_state(j.at("state").get<std::string>());
        r.variant = parse_consent_variant(j.at("variant").get<std::string>());
        r.created_at = j.at("created_at").get<Timestamp>();
        r.access_token = j.value("access_token", "");
        r.refresh_token = j.value("refresh_token", "");
        r.identity_failures = j.value("identity_failures", 0);
        r.support_flag = j.value("support_flag", false);
        r.link_nonce = j.value("link_nonce", "");
        r.granted_at = get_opt<Timestamp>(j, "granted_at");
        r.last_odometer_report_at = get_opt<Timestamp>(j, "last_odometer_report_at");
        r.last_reported_km = get_opt<double>(j, "last_reported_km");
        if (auto m = get_opt<std::string>(j, "privacy_mechanism"))
            r.privacy_mechanism = parse_privacy_mechanism(*m);
        r.transmission_started_at = get_opt<Timestamp>(j, "transmission_started_at");
        r.transmission_finished_at = get_opt<Timestamp>(j, "transmission_finished_at");
        r.advisory = get_opt<std::string>(j, "advisory");
        r.background_started_at = get_opt<Timestamp>(j, "background_started_at");
        r.revoked_at = get_opt<Timestamp>(j, "revoked_at");
        if (auto s = get_opt<std::string>(j, "revoke_source"))
            r.revoke_source = parse_revoke_source(*s);
        r.link_expires_at = get_opt<Timestamp>(j, "link_expires_at");
        for (const auto& t : j.value("history", Json::array()))
            r.history.push_back(Transition{parse_consent_state(t.at("from").get<std::string>()),
                                           parse_consent_state(t.at("to").get<std::string>()),
                                           parse_action(t.at("action").get<std::string>()), t.at("at").get<Timestamp>()});
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

void StreamMailer::send(const Email& email)
{
    std::lock_guard lock(mutex_);
    out_ << "To: " << email.to << "\nDate: " << format_rfc3339(email.at) << "\nSubject: " << email.subject << "\n\n"
         << email.body << '\n';
    if (email.link)
        out_ << *email.link << '\n';
    out_ << "--\n";
    out_.flush();
}

void FileMailer::send(const Email& email)
{
    Json j{{"to", email.to}, {"subject", email.subject}, {"body", email.body}, {"at", email.at}};
    j["link"] = email.link ? Json(*email.link) : Json(nullptr);
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    out << j.dump() << '\n';
    if (!out)
        throw Error(Errc::StorageIo, "cannot append to " + path_.string());
}

ConsentService::ConsentService(storage::StaticStore& store, const ProfileRegistry& profiles,
                               const EligibilityGate& eligibility, Mailer& mailer, VehiclePort& vehicles,
                               CredentialPort& credentials, Clock& clock, ConsentConfig config)
    : store_(store), profiles_(profiles), eligibility_(eligibility), mailer_(mailer), vehicles_(vehicles),
      credentials_(credentials), clock_(clock), config_(std::move(config))
{
    for (const auto& [vin, doc] : store_.documents(storage::Collection::consents))
        records_.insert_or_assign(vin, decode_record(doc));
}

void ConsentService::subscribe(Listener listener)
{
    std::lock_guard lock(mutex_);
    listeners_.push_back(std::move(listener));
}

ConsentRecord& ConsentService::require_locked(const Vin& vin)
{
    auto it = records_.find(vin);
    if (it == records_.end())
        throw Error(Errc::NoConsent, vin.str());
    return it->second;
}

void ConsentService::transition_locked(ConsentRecord& r, Action action, std::vector<ConsentRecord>& changed)
{
    auto to = next_state(r.variant, r.state, action);
    if (!to)
        throw Error(Errc::WrongState, std::string(to_string(action)) + " not allowed in state " +
                                          std::string(to_string(r.state)));
    r.history.push_back(Transition{r.state, *to, action, clock_.now()});
    r.state = *to;
    persist_locked(r);
    changed.push_back(r);
}

void ConsentService::expire_if_due_locked(ConsentRecord& r, std::vector<ConsentRecord>& changed)
{
    if (r.state != S::Active || r.variant != ConsentVariant::StellantisComplex)
        return;
    if (::cvp::consent::is_collection_permitted(r, clock_.now(), config_))
        return;
    transition_locked(r, A::expire, changed);
    mail(r, "Your data sharing has been paused",
         "No odometer report was received in the last 90 days. Report the current mileage to resume.");
}

void ConsentService::persist_locked(const ConsentRecord& r)
{
    store_.put_document(storage::Collection::consents, r.vin, encode_record(r, config_));
}

void ConsentService::notify(const std::vector<ConsentRecord>& changed)
{
    if (changed.empty())
        return;
    std::vector<Listener> listeners;
    {
        std::lock_guard lock(mutex_);
        listeners = listeners_;
    }
    for (const auto& r : changed)
        for (const auto& l : listeners)
            l(r);
}

void ConsentService::mail(const ConsentRecord& r, std::string subject, std::string body, std::optional<std::string> link)
{
    mailer_.send(Email{r.driver_email, std::move(subject), std::move(body), std::move(link), clock_.now()});
}

void ConsentService::issue_link_locked(ConsentRecord& r)
{
    auto now = clock_.now();
    r.link_nonce = hmac_sha256_hex(config_.link_secret, "nonce|" + r.vin.str() + "|" +
                                                            std::to_string(to_unix_ms(now)) + "|" +
                                                            r.link_nonce)
                       .substr(0, 16);
    r.link_expires_at = now + config_.link_validity;
}

std::optional<std::string> ConsentService::last_link(const Vin& vin) const
{
    std::lock_guard lock(mutex_);
    auto it = records_.find(vin);
    if (it == records_.end() || it->second.link_nonce.empty() || !it->second.link_expires_at)
        return std::nullopt;
    const auto& r = it->second;
    return config_.link_base_url + "?token=" +
           sign_link(config_.link_secret, r.vin, to_unix_ms(*r.link_expires_at), r.link_nonce);
}

ConsentRecord ConsentService::initiate(const Vin& vin, const std::string& driver_email)
{
    if (driver_email.find('@') == std::string::npos || driver_email.front() == '@' || driver_email.back() == '@')
        throw Error(Errc::ParseError, "invalid email '" + driver_email + "'");
    auto vehicle = store_.vehicle(vin);
    if (!vehicle)
        throw Error(Errc::UnknownVehicle, vin.str());
    if (!eligibility_.eligible(vin))
        throw Error(Errc::NotEligible, vin.str());
    const auto& profile = profiles_.profile_for(vehicle->brand);

    std::vector<ConsentRecord> changed;
    ConsentRecord out(vin);
    {
        std::lock_guard lock(mutex_);
        if (auto it = records_.find(vin); it != records_.end()) {
            expire_if_due_locked(it->second, changed);
            if (it->second.state == S::Active)
                throw Error(Errc::ConsentAlreadyActive, vin.str());
            if (it->second.state != S::Revoked)
                throw Error(Errc::WrongState, "consent for " + vin.str() + " is in state " +
                                                  std::string(to_string(it->second.state)));
        }
        ConsentRecord r(vin);
        r.driver_email = driver_email;
        r.variant = profile.consent_variant;
        r.created_at = clock_.now();
        issue_link_locked(r);
        auto& stored = records_.insert_or_assign(vin, std::move(r)).first->second;
        transition_locked(stored, A::send_email, changed);
        out = stored;
    }
    auto link = last_link(vin);
    std::string kinds;
    for (auto k : profile.request_kinds)
        kinds += (kinds.empty() ? "" : ", ") + std::string(to_string(k));
    mail(out, "Connect your " + profile.display_name + " to your insurance",
         "Follow the link to review and approve sharing of: " + kinds + ". The link is valid for 72 hours.", link);
    notify(changed);
    return out;
}

ConsentRecord ConsentService::resend_link(const Vin& vin)
{
    ConsentRecord out(vin);
    {
        std::lock_guard lock(mutex_);
        auto& r = require_locked(vin);
        if (r.state != S::EmailSent)
            throw Error(Errc::WrongState, "link can only be re-sent in state EmailSent");
        issue_link_locked(r);
        persist_locked(r);
        out = r;
    }
    mail(out, "Your new consent link", "The previous link is no longer valid.", last_link(vin));
    return out;
}

ConsentRecord ConsentService::open_link(const std::string& token)
{
    auto raw = token;
    if (auto q = raw.find("token="); q != std::string::npos)
        raw = raw.substr(q + 6);
    auto link = verify_link(config_.link_secret, raw);
    std::vector<ConsentRecord> changed;
    ConsentRecord out(link.vin);
    {
        std::lock_guard lock(mutex_);
        auto& r = require_locked(link.vin);
        if (r.link_nonce.empty() || !constant_time_equal(r.link_nonce, link.nonce))
            throw Error(Errc::InvalidLink, "consent link already used or superseded");
        if (clock_.now() >= from_unix_ms(link.expires_ms))
            throw Error(Errc::InvalidLink, "consent link expired");
        transition_locked(r, A::open_link, changed);
        r.link_nonce.clear();
        persist_locked(r);
        out = r;
    }
    notify(changed);
    return out;
}

ConsentRecord ConsentService::confirm_on_oem_portal(const Vin& vin, bool approved)
{
    std::vector<ConsentRecord> changed;
    ConsentRecord out(vin);
    {
        std::lock_guard lock(mutex_);
        auto& r = require_locked(vin);
        if (r.variant != ConsentVariant::SimplePortal)
            throw Error(Errc::WrongVariant, "portal confirmation is for the simple portal flow");
        if (r.state != S::AwaitingOemConfirmation)
            throw Error(Errc::WrongState, "confirm not allowed in state " + std::string(to_string(r.state)));
        if (approved) {
            auto refs = credentials_.establish(vin);
            r.access_token = refs.access_token;
            r.refresh_token = refs.refresh_token;
            r.granted_at = clock_.now();
            transition_locked(r, A::confirm_approved, changed);
        } else {
            r.revoked_at = clock_.now();
            r.revoke_source = RevokeSource::driver_portal;
            transition_locked(r, A::confirm_rejected, changed);
        }
        out = r;
    }
    notify(changed);
    return out;
}

ConsentRecord ConsentService::verify_identity(const Vin& vin, bool passed)
{
    std::vector<ConsentRecord> changed;
    ConsentRecord out(vin);
    {
        std::lock_guard lock(mutex_);
        auto& r = require_locked(vin);
        expire_if_due_locked(r, changed);
        if (r.state != S::IdentityVerification)
            throw Error(Errc::WrongState, "identity verification not allowed in state " +
                                              std::string(to_string(r.state)));
        if (passed) {
            transition_locked(r, A::identity_passed, changed);
        } else {
            ++r.identity_failures;
            if (r.identity_failures >= config_.identity_retry_limit)
                r.support_flag = true;
            persist_locked(r);
        }
        out = r;
    }
    notify(changed);
    return out;
}

PrivacyMechanism ConsentService::lookup_mechanism(const Vin& vin) const
{
    return vehicles_.privacy_mechanism(vin);
}

ConsentRecord ConsentService::configure_privacy_settings(const Vin& vin, PrivacyMechanism mechanism)
{
    std::vector<ConsentRecord> changed;
    ConsentRecord out(vin);
    {
        std::lock_guard lock(mutex_);
        auto& r = require_locked(vin);
        if (r.state != S::PrivacySettings)
            throw Error(Errc::WrongState, "privacy settings not allowed in state " + std::string(to_string(r.state)));
        auto installed = vehicles_.privacy_mechanism(vin);
        if (installed != mechanism)
            throw Error(Errc::MechanismMismatch, "vehicle uses " + std::string(to_string(installed)) + ", not " +
                                                     std::string(to_string(mechanism)));
        r.privacy_mechanism = mechanism;
        transition_locked(r, A::privacy_configured, changed);
        out = r;
    }
    notify(changed);
    return out;
}

ConsentRecord ConsentService::run_transmission_test(const Vin& vin)
{
    std::vector<ConsentRecord> changed;
    ConsentRecord out(vin);
    {
        std::lock_guard lock(mutex_);
        auto& r = require_locked(vin);
        if (r.state != S::TransmissionTest)
            throw Error(Errc::WrongState, "transmission test not allowed in state " + std::string(to_string(r.state)));
        auto start = clock_.now();
        bool ok = vehicles_.transmission_test(vin, start, config_.transmission_test_duration);
        // The driver runs the engine for the whole test window.
        clock_.sleep_for(config_.transmission_test_duration);
        r.transmission_started_at = start;
        r.transmission_finished_at = clock_.now();
        if (ok) {
            r.advisory.reset();
            r.background_started_at = r.transmission_finished_at;
            transition_locked(r, A::transmission_passed, changed);
        } else {
            r.advisory = "transmission test failed: have the vehicle checked at a brand workshop, then retry";
            persist_locked(r);
        }
        out = r;
    }
    notify(changed);
    return out;
}

ConsentRecord ConsentService::complete_background_processing(const Vin& vin)
{
    std::vector<ConsentRecord> changed;
    ConsentRecord out(vin);
    {
        std::lock_guard lock(mutex_);
        auto& r = require_locked(vin);
        if (r.state != S::BackgroundProcessing)
            throw Error(Errc::WrongState, "background processing not running in state " +
                                              std::string(to_string(r.state)));
        auto since = r.background_started_at.value_or(r.created_at);
        if (clock_.now() - since < config_.background_min)
            throw Error(Errc::StillProcessing, "background processing needs more time");
        if (vehicles_.trips_since(vin, since) < 1)
            throw Error(Errc::CarNotDriven, "the vehicle must be driven during background processing");
        transition_locked(r, A::background_completed, changed);
        out = r;
    }
    mail(out, "Report your mileage", "Report the current odometer reading to start data sharing.");
    notify(changed);
    return out;
}

ConsentRecord ConsentService::report_odometer(const Vin& vin, double km, Timestamp at)
{
    if (!(km >= 0))
        throw Error(Errc::InvalidSample, "odometer must be non-negative");
    std::vector<ConsentRecord> changed;
    ConsentRecord out(vin);
    {
        std::lock_guard lock(mutex_);
        auto& r = require_locked(vin);
        expire_if_due_locked(r, changed);
        if (r.variant != ConsentVariant::StellantisComplex)
            throw Error(Errc::WrongVariant, "odometer reports belong to the complex flow");
        if (r.state != S::AwaitingOdometerReport && r.state != S::Active && r.state != S::Expired)
            throw Error(Errc::WrongState, "odometer report not allowed in state " + std::string(to_string(r.state)));
        double floor_km = r.last_reported_km.value_or(0.0);
        if (odometer_lookup_)
            if (auto stored = odometer_lookup_(vin))
                floor_km = std::max(floor_km, *stored);
        if (km < floor_km)
            throw Error(Errc::OdometerRegression, format_km(km) + " km is below " + format_km(floor_km) + " km");
        r.last_reported_km = km;
        r.last_odometer_report_at = at;
        if (r.state == S::Active) {
            persist_locked(r);
        } else {
            if (r.state == S::AwaitingOdometerReport) {
                auto refs = credentials_.establish(vin);
                r.access_token = refs.access_token;
                r.refresh_token = refs.refresh_token;
                r.granted_at = clock_.now();
            }
            transition_locked(r, A::report_odometer, changed);
        }
        out = r;
    }
    notify(changed);
    return out;
}

ConsentRecord ConsentService::revoke(const Vin& vin, RevokeSource source)
{
    std::vector<ConsentRecord> changed;
    ConsentRecord out(vin);
    {
        std::lock_guard lock(mutex_);
        auto& r = require_locked(vin);
        if (r.state == S::Revoked)
            throw Error(Errc::AlreadyRevoked, vin.str());
        r.revoked_at = clock_.now();
        r.revoke_source = source;
        r.link_nonce.clear();
        transition_locked(r, A::revoke, changed);
        if (!r.access_token.empty() || !r.refresh_token.empty())
            credentials_.invalidate(vin, source);
        r.access_token.clear();
        r.refresh_token.clear();
        persist_locked(r);
        changed.back() = r;
        out = r;
    }
    notify(changed);
    return out;
}

std::vector<ConsentRecord> ConsentService::sweep()
{
    std::vector<ConsentRecord> changed;
    std::vector<ConsentRecord> prompts;
    {
        std::lock_guard lock(mutex_);
        auto now = clock_.now();
        for (auto& [vin, r] : records_) {
            expire_if_due_locked(r, changed);
            if (r.state == S::BackgroundProcessing) {
                auto since = r.background_started_at.value_or(r.created_at);
                if (now - since >= config_.background_min && vehicles_.trips_since(vin, since) >= 1) {
                    transition_locked(r, A::background_completed, changed);
                    prompts.push_back(r);
                }
            }
        }
    }
    for (const auto& r : prompts)
        mail(r, "Report your mileage", "Report the current odometer reading to start data sharing.");
    notify(changed);
    return changed;
}

std::optional<ConsentRecord> ConsentService::record(const Vin& vin)
{
    std::vector<ConsentRecord> changed;
    std::optional<ConsentRecord> out;
    {
        std::lock_guard lock(mutex_);
        auto it = records_.find(vin);
        if (it == records_.end())
            return std::nullopt;
        expire_if_due_locked(it->second, changed);
        out = it->second;
    }
    notify(changed);
    return out;
}

std::vector<ConsentRecord> ConsentService::records()
{
    std::vector<ConsentRecord> changed;
    std::vector<ConsentRecord> out;
    {
        std::lock_guard lock(mutex_);
        for (auto& [_, r] : records_) {
            expire_if_due_locked(r, changed);
            out.push_back(r);
        }
    }
    notify(changed);
    return out;
}

bool ConsentService::is_collection_permitted(const Vin& vin)
{
    std::lock_guard lock(mutex_);
    auto it = records_.find(vin);
    return it != records_.end() && ::cvp::consent::is_collection_permitted(it->second, clock_.now(), config_);
}

} // namespace cvp::consent
