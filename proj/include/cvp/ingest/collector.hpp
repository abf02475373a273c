#pragma once

#include "cvp/consent/consent.hpp"
#include "cvp/core/quota.hpp"
#include "cvp/ingest/aggregator.hpp"
#include "cvp/ingest/credentials.hpp"
#include "cvp/ingest/metrics.hpp"
#include "cvp/storage/series_store.hpp"
#include "cvp/storage/static_store.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <set>

namespace cvp::ingest {

struct CollectorConfig {
    // Added to every sliding quota window of the local mirror.
    Millis mirror_skew{1000};
    int upstream_retries = 3;
    Millis upstream_backoff{1000}; // 1, 2, 4 s
    // Optional cross-VIN smoothing limit.
    std::optional<QuotaSpec> global_limit;
};

enum class RequestOrigin { notification, poll, manual };

std::string_view to_string(RequestOrigin o);

struct PendingRequest {
    std::uint64_t id = 0;
    Vin vin;
    DataPointKinds kinds;
    RequestOrigin origin = RequestOrigin::manual;
    Timestamp enqueued_at;
    Timestamp due;
    std::optional<Timestamp> deadline; // dropped when not executed by then
    int upstream_attempts = 0;
    bool holds_permit = false; // retries reuse the first attempt's mirror permit
    bool deferred = false;     // counted and logged once, however often it waits
};

enum class RequestOutcome { executed, skipped_inactive, deferred, retry_scheduled, failed, expired };

std::string_view to_string(RequestOutcome o);

struct RequestLogEntry {
    std::uint64_t id = 0;
    Vin vin;
    RequestOrigin origin = RequestOrigin::manual;
    Timestamp at;
    RequestOutcome outcome = RequestOutcome::executed;
    std::optional<Errc> error;
    std::size_t stored = 0;
};

/// Per-VIN request queue in front of the aggregator. Each VIN has a local
/// mirror of its brand quota; a request the mirror would refuse is deferred
/// to the instant the mirror frees a permit, so the upstream limit is never
/// hit. run_due() is meant to be driven by a single task, which serializes
/// execution per VIN.
class Collector {
public:
    Collector(const ProfileRegistry& profiles, storage::StaticStore& vehicles, storage::SeriesStore& series,
              consent::ConsentService& consents, CredentialVault& vault, AggregatorPort& aggregator,
              const Clock& clock, Metrics& metrics, CollectorConfig config = {});

    std::uint64_t enqueue(const Vin& vin, const DataPointKinds& kinds, RequestOrigin origin,
                          std::optional<Timestamp> deadline = std::nullopt);

    std::optional<Timestamp> next_due() const;
    /// Works off every request due at or before `now`; returns how many
    /// reached the upstream API successfully.
    std::size_t run_due(Timestamp now);

    std::size_t pending() const;
    std::vector<PendingRequest> pending_requests() const;
    std::vector<RequestLogEntry> log() const;
    /// Mirror permits in use for `vin` at `now`.
    int mirror_in_use(const Vin& vin, Timestamp now) const;

    Json state() const;
    void restore(const Json& state);

private:
    struct Key {
        Timestamp due;
        std::uint64_t id;
        auto operator<=>(const Key&) const = default;
    };

    QuotaLimiter& mirror_locked(const Vin& vin, const Vehicle& vehicle);
    void process(PendingRequest req, Timestamp now, std::size_t& executed);
    void record(const PendingRequest& req, Timestamp now, RequestOutcome outcome, std::optional<Errc> error,
                std::size_t stored = 0);
    void finish_slot(const PendingRequest& req, bool ok);
    void push(PendingRequest req);

    const ProfileRegistry& profiles_;
    storage::StaticStore& vehicles_;
    storage::SeriesStore& series_;
    consent::ConsentService& consents_;
    CredentialVault& vault_;
    AggregatorPort& aggregator_;
    const Clock& clock_;
    Metrics& metrics_;
    CollectorConfig config_;

    mutable std::mutex mutex_;
    std::map<Key, PendingRequest> queue_;
    std::map<Vin, QuotaLimiter> mirrors_;
    std::optional<QuotaLimiter> global_;
    std::vector<RequestLogEntry> log_;
    std::uint64_t next_id_ = 1;
};

} // namespace cvp::ingest
