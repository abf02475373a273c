#pragma once

#include "cvp/consent/consent.hpp"
#include "cvp/ingest/collector.hpp"
#include "cvp/ingest/metrics.hpp"
#include "cvp/ingest/policy.hpp"
#include "cvp/sim/webhook.hpp"
#include "cvp/storage/series_store.hpp"
#include "cvp/storage/static_store.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <set>

namespace cvp::ingest {

enum class Disposition {
    stored,
    triggered_request,
    ignored_duplicate,
    rejected_bad_signature,
    quarantined, // unknown VIN or brand mismatch
    ignored,     // no collection consent, or nothing to store or request
};

std::string_view to_string(Disposition d);
Disposition parse_disposition(std::string_view s);

struct DeliveryRecord {
    std::string delivery_id;
    std::optional<Vin> vin;
    std::optional<NotificationKind> kind;
    Timestamp received_at;
    Disposition disposition = Disposition::stored;

    bool operator==(const DeliveryRecord&) const = default;
};

Json encode_delivery_record(const DeliveryRecord& r);
DeliveryRecord decode_delivery_record(const Json& j);

/// The public webhook endpoint. Signature first, then dedup by delivery_id,
/// then routing: location_change only enqueues the policy's request,
/// revoke_of_consent revokes the consent, everything else is stored.
class WebhookReceiver {
public:
    WebhookReceiver(sim::WebhookSecrets secrets, storage::StaticStore& vehicles, storage::SeriesStore& series,
                    consent::ConsentService& consents, Collector& collector, const PolicySet& policies,
                    const Clock& clock, Metrics& metrics);

    /// Throws BadSignature (after recording the rejection) and ParseError.
    DeliveryRecord receive(const BrandId& brand, std::string_view body, std::string_view signature,
                           std::string_view delivery_id_header = {});

    std::vector<DeliveryRecord> log() const;
    std::vector<NotificationEvent> quarantine() const;

    Json state() const;
    void restore(const Json& state);

private:
    DeliveryRecord route(const BrandId& brand, const NotificationEvent& event, Timestamp now);

    sim::WebhookSecrets secrets_;
    storage::StaticStore& vehicles_;
    storage::SeriesStore& series_;
    consent::ConsentService& consents_;
    Collector& collector_;
    const PolicySet& policies_;
    const Clock& clock_;
    Metrics& metrics_;

    mutable std::mutex mutex_;
    std::set<std::string> seen_;
    std::vector<DeliveryRecord> log_;
    std::vector<NotificationEvent> quarantine_;
};

} // namespace cvp::ingest
