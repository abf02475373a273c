#include "cvp/ingest/webhook_receiver.hpp"

#include "cvp/core/crypto.hpp"

namespace cvp::ingest {

namespace {

constexpr std::array kDispositions{Disposition::stored,    Disposition::triggered_request,
                                   Disposition::ignored_duplicate, Disposition::rejected_bad_signature,
                                   Disposition::quarantined, Disposition::ignored};

} // namespace

std::string_view to_string(Disposition d)
{
    switch (d) {
    case Disposition::stored: return "stored";
    case Disposition::triggered_request: return "triggered_request";
    case Disposition::ignored_duplicate: return "ignored_duplicate";
    case Disposition::rejected_bad_signature: return "rejected_bad_signature";
    case Disposition::quarantined: return "quarantined";
    case Disposition::ignored: return "ignored";
    }
    return "?";
}

Disposition parse_disposition(std::string_view s)
{
    for (auto d : kDispositions)
        if (to_string(d) == s)
            return d;
    throw Error(Errc::ParseError, "unknown disposition: " + std::string(s));
}

Json encode_delivery_record(const DeliveryRecord& r)
{
    Json j{{"delivery_id", r.delivery_id}, {"received_at", r.received_at}, {"disposition", to_string(r.disposition)}};
    if (r.vin)
        j["vin"] = *r.vin;
    if (r.kind)
        j["kind"] = *r.kind;
    return j;
}

DeliveryRecord decode_delivery_record(const Json& j)
{
    try {
        DeliveryRecord r;
        r.delivery_id = j.at("delivery_id").get<std::string>();
        r.received_at = j.at("received_at").get<Timestamp>();
        r.disposition = parse_disposition(j.at("disposition").get<std::string>());
        if (j.contains("vin"))
            r.vin = j.at("vin").get<Vin>();
        if (j.contains("kind"))
            r.kind = j.at("kind").get<NotificationKind>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

WebhookReceiver::WebhookReceiver(sim::WebhookSecrets secrets, storage::StaticStore& vehicles,
                                 storage::SeriesStore& series, consent::ConsentService& consents,
                                 Collector& collector, const PolicySet& policies, const Clock& clock,
                                 Metrics& metrics)
    : secrets_(std::move(secrets)),
      vehicles_(vehicles),
      series_(series),
      consents_(consents),
      collector_(collector),
      policies_(policies),
      clock_(clock),
      metrics_(metrics)
{
}

DeliveryRecord WebhookReceiver::receive(const BrandId& brand, std::string_view body, std::string_view signature,
                                        std::string_view delivery_id_header)
{
    auto now = clock_.now();
    metrics_.add(metric::webhooks_received);

    if (!constant_time_equal(hmac_sha256_hex(secrets_.secret_for(brand), body), signature)) {
        DeliveryRecord r{std::string(delivery_id_header), std::nullopt, std::nullopt, now,
                         Disposition::rejected_bad_signature};
        {
            std::lock_guard lock(mutex_);
            log_.push_back(r);
        }
        metrics_.add(metric::webhooks_rejected);
        throw Error(Errc::BadSignature, "signature mismatch for brand " + brand.value);
    }

    auto event = sim::parse_delivery_body(body);
    if (!delivery_id_header.empty() && delivery_id_header != event.delivery_id)
        throw Error(Errc::ParseError, "delivery_id header does not match the body");

    {
        std::lock_guard lock(mutex_);
        if (!seen_.insert(event.delivery_id).second) {
            DeliveryRecord r{event.delivery_id, event.vin, event.kind, now, Disposition::ignored_duplicate};
            log_.push_back(r);
            metrics_.add(metric::webhooks_duplicate);
            return r;
        }
    }

    DeliveryRecord r;
    try {
        r = route(brand, event, now);
    } catch (...) {
        // Let the sender's retry go through.
        std::lock_guard lock(mutex_);
        seen_.erase(event.delivery_id);
        throw;
    }
    std::lock_guard lock(mutex_);
    log_.push_back(r);
    return r;
}

DeliveryRecord WebhookReceiver::route(const BrandId& brand, const NotificationEvent& event, Timestamp now)
{
    DeliveryRecord r{event.delivery_id, event.vin, event.kind, now, Disposition::stored};

    auto vehicle = vehicles_.vehicle(event.vin);
    if (!vehicle || vehicle->brand != brand) {
        std::lock_guard lock(mutex_);
        quarantine_.push_back(event);
        metrics_.add(metric::webhooks_quarantined);
        r.disposition = Disposition::quarantined;
        return r;
    }

    if (event.kind == NotificationKind::revoke_of_consent) {
        if (series_.append_event(event))
            metrics_.add(metric::events_stored);
        try {
            consents_.revoke(event.vin, consent::RevokeSource::oem_notification);
        } catch (const Error& e) {
            // Nothing to revoke, or already revoked from the driver portal.
            if (e.code() != Errc::NoConsent && e.code() != Errc::AlreadyRevoked && e.code() != Errc::WrongState)
                throw;
        }
        return r;
    }

    if (!consents_.is_collection_permitted(event.vin)) {
        r.disposition = Disposition::ignored;
        return r;
    }

    auto policy = policies_.for_brand(brand);
    auto it = policy.on_notification.find(event.kind);
    if (it != policy.on_notification.end()) {
        collector_.enqueue(event.vin, it->second, RequestOrigin::notification);
        r.disposition = Disposition::triggered_request;
    } else if (event.kind == NotificationKind::location_change) {
        r.disposition = Disposition::ignored;
    }
    // location_change only ever asks for data; it is not an event of its own.
    if (event.kind != NotificationKind::location_change && series_.append_event(event))
        metrics_.add(metric::events_stored);
    return r;
}

std::vector<DeliveryRecord> WebhookReceiver::log() const
{
    std::lock_guard lock(mutex_);
    return log_;
}

std::vector<NotificationEvent> WebhookReceiver::quarantine() const
{
    std::lock_guard lock(mutex_);
    return quarantine_;
}

Json WebhookReceiver::state() const
{
    std::lock_guard lock(mutex_);
    Json log = Json::array();
    for (const auto& r : log_)
        log.push_back(encode_delivery_record(r));
    return {{"seen", seen_}, {"log", log}, {"quarantine", quarantine_}};
}

void WebhookReceiver::restore(const Json& state)
{
    std::lock_guard lock(mutex_);
    try {
        seen_ = state.at("seen").get<std::set<std::string>>();
        log_.clear();
        for (const auto& r : state.at("log"))
            log_.push_back(decode_delivery_record(r));
        quarantine_ = state.at("quarantine").get<std::vector<NotificationEvent>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

} // namespace cvp::ingest
