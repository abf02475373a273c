#include "cvp/analytics/report.hpp"

#include "cvp/ingest/poll_scheduler.hpp"

#include <algorithm>
#include <cstdio>

namespace cvp::analytics {

namespace {

double hours(Millis d) { return std::chrono::duration<double, std::ratio<3600>>(d).count(); }

Json encode_range(storage::TimeRange r)
{
    Json j = Json::object();
    j["from"] = r.from == Timestamp::min() ? Json(nullptr) : Json(r.from);
    j["to"] = r.to == Timestamp::max() ? Json(nullptr) : Json(r.to);
    return j;
}

std::string_view to_string(FeatureSource s) { return s == FeatureSource::gps_trips ? "gps_trips" : "odometer_polls"; }

} // namespace

TripSummary summarize_trip(const Vin& vin, const Track& trip, const TimeZone& zone, const MapProvider* map,
                           const AnalyticsConfig& config)
{
    TripSummary s{vin, trip.front().t, trip.back().t};
    s.distance_km = compute_distance(trip);
    s.night_km = std::min(night_km(trip, zone, config.night), s.distance_km);
    auto speeds = estimate_speeds(trip, config.segmentation.idle_gap);
    for (const auto& seg : speeds)
        s.max_speed_kmh = std::max(s.max_speed_kmh, seg.kmh);
    if (s.end > s.start)
        s.mean_speed_kmh = s.distance_km / hours(s.end - s.start);
    s.harsh_brake_count = static_cast<int>(detect_harsh_brakes(speeds, config.harsh_brake_mps2).size());
    if (map && !map->empty()) {
        auto o = compute_overspeed(trip, *map, config.overspeed);
        s.overspeed_km = o.overspeed_km;
        s.uncovered_km = o.uncovered_km;
        if (auto it = o.by_class.find(RoadClass::urban); it != o.by_class.end())
            s.urban_km = it->second.km;
    }
    s.point_count = trip.size();
    return s;
}

Track load_track(const storage::SeriesStore& series, const Vin& vin, storage::TimeRange range)
{
    Track track;
    for (const auto& s : series.query_series(vin, DataPointKind::gps_coordinates, range)) {
        // A position both requested and notified at the same instant counts once.
        if (!track.empty() && track.back().t == s.observed_at)
            continue;
        track.push_back(TrackPoint{s.observed_at, std::get<GeoPoint>(s.value)});
    }
    return track;
}

std::vector<TripSummary> trip_summaries(const storage::SeriesStore& series, const Vin& vin,
                                        storage::TimeRange range, const TimeZone& zone, const MapProvider* map,
                                        const AnalyticsConfig& config)
{
    std::vector<TripSummary> out;
    for (const auto& trip : segment_trips(load_track(series, vin, range), config.segmentation))
        out.push_back(summarize_trip(vin, trip, zone, map, config));
    return out;
}

RiskFeatureVector build_risk_features(const storage::SeriesStore& series, const Vin& vin, storage::TimeRange period,
                                      const TimeZone& zone, const MapProvider* map, const AnalyticsConfig& config)
{
    RiskFeatureVector r{vin, period};
    for (const auto& e : series.query_events(vin, period)) {
        if (e.kind == NotificationKind::accident_reported)
            ++r.accident_flags.accident;
        else if (e.kind == NotificationKind::breakdown_reported)
            ++r.accident_flags.breakdown;
        else if (e.kind == NotificationKind::emergency_reported)
            ++r.accident_flags.emergency;
    }

    auto trips = trip_summaries(series, vin, period, zone, map, config);
    if (!trips.empty()) {
        double night = 0, urban = 0, overspeed = 0;
        int brakes = 0;
        for (const auto& t : trips) {
            r.total_km += t.distance_km;
            night += t.night_km;
            urban += t.urban_km;
            overspeed += t.overspeed_km;
            brakes += t.harsh_brake_count;
        }
        r.trip_count = static_cast<int>(trips.size());
        if (r.total_km > 0) {
            r.night_fraction = std::clamp(night / r.total_km, 0.0, 1.0);
            r.urban_fraction = std::clamp(urban / r.total_km, 0.0, 1.0);
            r.overspeed_fraction = std::clamp(overspeed / r.total_km, 0.0, 1.0);
            r.harsh_brakes_per_100km = brakes / r.total_km * 100.0;
        }
        return r;
    }

    auto odometer = series.query_series(vin, DataPointKind::odometer, period);
    if (odometer.size() < 2)
        throw Error(Errc::NoDataInPeriod, "no trips and fewer than two odometer readings for " + vin.str());
    r.source = FeatureSource::odometer_polls;
    r.total_km = std::get<Kilometers>(odometer.back().value).value - std::get<Kilometers>(odometer.front().value).value;
    double night = 0;
    auto first = std::chrono::sys_days{zone.local_date(odometer.front().observed_at)};
    auto last = std::chrono::sys_days{zone.local_date(odometer.back().observed_at)};
    ingest::NightWindow window{config.night.starts, config.night.ends};
    for (auto d = first; d < last; d += std::chrono::days{1}) {
        try {
            night += ingest::nightly_distance_from_polls(series, vin, std::chrono::year_month_day{d}, zone, window);
        } catch (const Error& e) {
            if (e.code() != Errc::MissingSlot)
                throw;
        }
    }
    if (r.total_km > 0)
        r.night_fraction = std::clamp(night / r.total_km, 0.0, 1.0);
    return r;
}

CostVerdict cost_viability(double data_cost_eur_month, double premium_eur_month, double threshold)
{
    if (!(premium_eur_month > 0))
        throw Error(Errc::NonPositivePremium, "premium must be positive");
    double ratio = data_cost_eur_month / premium_eur_month;
    return CostVerdict{data_cost_eur_month, premium_eur_month, ratio, threshold, ratio <= threshold};
}

TheftReport theft_report(const storage::SeriesStore& series, const Vin& vin, const SegmentationConfig& segmentation)
{
    auto seen = series.last_seen(vin);
    if (!seen)
        throw Error(Errc::NoDataForVin, vin.str());
    TheftReport r{vin, std::nullopt, std::nullopt, std::nullopt, *seen};
    auto last = series.last_known(vin, {DataPointKind::doors_lock_state});
    if (auto it = last.find(DataPointKind::doors_lock_state); it != last.end()) {
        r.locked = std::get<LockState>(it->second.value).locked;
        r.lock_state_at = it->second.observed_at;
    }
    auto trips = segment_trips(load_track(series, vin, storage::TimeRange::all()), segmentation);
    if (!trips.empty())
        r.last_trajectory = std::move(trips.back());
    return r;
}

Json encode(const TripSummary& t)
{
    return Json{{"vin", t.vin},
                {"start", t.start},
                {"end", t.end},
                {"distance_km", t.distance_km},
                {"night_km", t.night_km},
                {"day_km", t.distance_km - t.night_km},
                {"max_speed_kmh", t.max_speed_kmh},
                {"mean_speed_kmh", t.mean_speed_kmh},
                {"harsh_brake_count", t.harsh_brake_count},
                {"overspeed_km", t.overspeed_km},
                {"uncovered_km", t.uncovered_km},
                {"urban_km", t.urban_km},
                {"point_count", t.point_count}};
}

Json encode(const RiskFeatureVector& r)
{
    return Json{{"vin", r.vin},
                {"period", encode_range(r.period)},
                {"source", to_string(r.source)},
                {"trip_count", r.trip_count},
                {"total_km", r.total_km},
                {"night_fraction", r.night_fraction},
                {"urban_fraction", r.urban_fraction},
                {"overspeed_fraction", r.overspeed_fraction},
                {"harsh_brakes_per_100km", r.harsh_brakes_per_100km},
                {"accident_flags",
                 {{"accident", r.accident_flags.accident},
                  {"breakdown", r.accident_flags.breakdown},
                  {"emergency", r.accident_flags.emergency}}}};
}

Json encode(const CostVerdict& c)
{
    return Json{{"data_cost_eur_month", c.data_cost_eur_month},
                {"premium_eur_month", c.premium_eur_month},
                {"ratio", c.ratio},
                {"threshold", c.threshold},
                {"verdict", c.verdict()}};
}

Json encode(const TheftReport& r)
{
    Json j{{"vin", r.vin}, {"last_seen_at", r.last_seen_at}};
    j["last_lock_state"] = r.locked ? Json(*r.locked ? "locked" : "unlocked") : Json(nullptr);
    if (r.lock_state_at)
        j["lock_state_at"] = *r.lock_state_at;
    if (r.last_trajectory) {
        Json points = Json::array();
        for (const auto& p : *r.last_trajectory)
            points.push_back({{"t", p.t}, {"lat", p.pos.lat}, {"lon", p.pos.lon}});
        j["last_trajectory"] = points;
    } else {
        j["last_trajectory"] = nullptr;
    }
    return j;
}

Json vin_report(const Vin& vin, storage::TimeRange period, const std::vector<TripSummary>& trips,
                const std::optional<RiskFeatureVector>& risk, const std::optional<CostVerdict>& cost)
{
    Json t = Json::array();
    for (const auto& trip : trips)
        t.push_back(encode(trip));
    return Json{{"schema_version", kReportSchemaVersion},
                {"vin", vin},
                {"period", encode_range(period)},
                {"trips", t},
                {"risk", risk ? encode(*risk) : Json(nullptr)},
                {"cost", cost ? encode(*cost) : Json(nullptr)}};
}

std::string trips_csv(const std::vector<TripSummary>& trips)
{
    std::string out = "schema_version,vin,start,end,distance_km,night_km,max_speed_kmh,mean_speed_kmh,"
                      "harsh_brake_count,overspeed_km,uncovered_km,point_count\n";
    for (const auto& t : trips) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.1f,%.1f,%d,%.3f,%.3f,%zu\n", t.distance_km, t.night_km,
                      t.max_speed_kmh, t.mean_speed_kmh, t.harsh_brake_count, t.overspeed_km, t.uncovered_km,
                      t.point_count);
        out += std::to_string(kReportSchemaVersion) + "," + t.vin.str() + "," + format_rfc3339(t.start) + "," +
               format_rfc3339(t.end) + "," + buf;
    }
    return out;
}

} // namespace cvp::analytics
