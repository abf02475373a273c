#pragma once

#include "cvp/consent/consent.hpp"
#include "cvp/core/time_zone.hpp"
#include "cvp/ingest/collector.hpp"
#include "cvp/ingest/metrics.hpp"
#include "cvp/ingest/policy.hpp"
#include "cvp/storage/series_store.hpp"
#include "cvp/storage/static_store.hpp"

#include <chrono>

namespace cvp::ingest {

struct SlotRecord {
    Vin vin;
    Timestamp slot;
    bool missed = false; // passed while the scheduler was not running

    bool operator==(const SlotRecord&) const = default;
};

/// Fires the scheduled_polls policies: one request per (Active VIN, slot),
/// due at the slot and dropped one tick after it. Slots that passed while
/// the scheduler was not running are counted as missed, never back-filled.
class PollScheduler {
public:
    PollScheduler(const PolicySet& policies, consent::ConsentService& consents, storage::StaticStore& vehicles,
                  Collector& collector, Metrics& metrics, Millis tick = std::chrono::minutes{1});

    /// Slots at or before `t` are considered handled.
    void start_at(Timestamp t);
    std::optional<Timestamp> next_due() const;
    void run_due(Timestamp now);

    std::vector<SlotRecord> slots() const;
    Millis tick() const { return tick_; }

    Json state() const;
    void restore(const Json& state);

private:
    struct Target {
        Vin vin;
        TimeZone zone;
        CollectionPolicy policy;
    };
    std::vector<Target> targets() const;
    static std::optional<Timestamp> next_slot(const Target& t, Timestamp after);

    const PolicySet& policies_;
    consent::ConsentService& consents_;
    storage::StaticStore& vehicles_;
    Collector& collector_;
    Metrics& metrics_;
    Millis tick_;

    mutable std::mutex mutex_;
    std::optional<Timestamp> cursor_;
    std::vector<SlotRecord> slots_;
};

struct NightWindow {
    Millis starts{std::chrono::hours{22}};
    Millis ends{std::chrono::hours{5}}; // on the next local day
};

/// odometer(ends, day+1) - odometer(starts, day) from the poll samples,
/// each looked up within `tolerance` of its slot. Throws MissingSlot.
double nightly_distance_from_polls(const storage::SeriesStore& series, const Vin& vin,
                                   std::chrono::year_month_day day, const TimeZone& zone,
                                   NightWindow window = {}, Millis tolerance = std::chrono::minutes{1});

} // namespace cvp::ingest
