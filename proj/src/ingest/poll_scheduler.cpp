#include "cvp/ingest/poll_scheduler.hpp"

#include <cmath>

namespace cvp::ingest {

PollScheduler::PollScheduler(const PolicySet& policies, consent::ConsentService& consents,
                             storage::StaticStore& vehicles, Collector& collector, Metrics& metrics, Millis tick)
    : policies_(policies), consents_(consents), vehicles_(vehicles), collector_(collector), metrics_(metrics),
      tick_(tick)
{
}

void PollScheduler::start_at(Timestamp t)
{
    std::lock_guard lock(mutex_);
    cursor_ = t;
}

std::vector<PollScheduler::Target> PollScheduler::targets() const
{
    std::vector<Target> out;
    for (const auto& record : consents_.records()) {
        if (!consents_.is_collection_permitted(record.vin))
            continue;
        auto vehicle = vehicles_.vehicle(record.vin);
        if (!vehicle)
            continue;
        auto policy = policies_.for_brand(vehicle->brand);
        if (policy.mode != CollectionMode::scheduled_polls)
            continue;
        out.push_back(Target{record.vin, TimeZone::named(vehicle->time_zone), std::move(policy)});
    }
    return out;
}

std::optional<Timestamp> PollScheduler::next_slot(const Target& t, Timestamp after)
{
    auto day = std::chrono::sys_days{t.zone.local_date(after)};
    for (auto d = day - std::chrono::days{1}; d <= day + std::chrono::days{2}; d += std::chrono::days{1})
        for (auto tod : t.policy.poll_times) {
            auto slot = t.zone.at(std::chrono::year_month_day{d}, tod);
            if (slot > after)
                return slot;
        }
    return std::nullopt;
}

std::optional<Timestamp> PollScheduler::next_due() const
{
    std::lock_guard lock(mutex_);
    if (!cursor_)
        return std::nullopt;
    std::optional<Timestamp> best;
    for (const auto& t : targets()) {
        auto s = next_slot(t, *cursor_);
        if (s && (!best || *s < *best))
            best = s;
    }
    return best;
}

void PollScheduler::run_due(Timestamp now)
{
    std::lock_guard lock(mutex_);
    auto cursor = cursor_.value_or(now - Millis{1});
    if (now <= cursor)
        return;
    for (const auto& t : targets()) {
        for (auto s = next_slot(t, cursor); s && *s <= now; s = next_slot(t, *s)) {
            bool missed = now - *s > tick_;
            if (missed) {
                metrics_.add(metric::slots_missed);
            } else {
                metrics_.add(metric::slots_fired);
                collector_.enqueue(t.vin, t.policy.poll_kinds, RequestOrigin::poll, *s + tick_);
            }
            slots_.push_back(SlotRecord{t.vin, *s, missed});
        }
    }
    cursor_ = now;
}

std::vector<SlotRecord> PollScheduler::slots() const
{
    std::lock_guard lock(mutex_);
    return slots_;
}

Json PollScheduler::state() const
{
    std::lock_guard lock(mutex_);
    Json slots = Json::array();
    for (const auto& s : slots_)
        slots.push_back({{"vin", s.vin}, {"slot", s.slot}, {"missed", s.missed}});
    Json j{{"slots", slots}};
    if (cursor_)
        j["cursor"] = *cursor_;
    return j;
}

void PollScheduler::restore(const Json& state)
{
    std::lock_guard lock(mutex_);
    try {
        cursor_.reset();
        if (state.contains("cursor"))
            cursor_ = state.at("cursor").get<Timestamp>();
        slots_.clear();
        for (const auto& s : state.at("slots"))
            slots_.push_back(SlotRecord{s.at("vin").get<Vin>(), s.at("slot").get<Timestamp>(), s.at("missed").get<bool>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
}

double nightly_distance_from_polls(const storage::SeriesStore& series, const Vin& vin,
                                   std::chrono::year_month_day day, const TimeZone& zone, NightWindow window,
                                   Millis tolerance)
{
    auto reading = [&](Timestamp slot) {
        auto samples = series.query_series(vin, DataPointKind::odometer,
                                           storage::TimeRange{slot - tolerance, slot + tolerance + Millis{1}});
        if (samples.empty())
            throw Error(Errc::MissingSlot, "no odometer poll near " + format_rfc3339(slot));
        const TelemetrySample* best = &samples.front();
        for (const auto& s : samples)
            if (std::chrono::abs(s.observed_at - slot) < std::chrono::abs(best->observed_at - slot))
                best = &s;
        return std::get<Kilometers>(best->value).value;
    };
    auto next = std::chrono::year_month_day{std::chrono::sys_days{day} + std::chrono::days{1}};
    double evening = reading(zone.at(day, window.starts));
    double morning = reading(zone.at(next, window.ends));
    return morning - evening;
}

} // namespace cvp::ingest
