#pragma once

#include "cvp/analytics/speed_map.hpp"
#include "cvp/analytics/track.hpp"
#include "cvp/core/codec.hpp"
#include "cvp/storage/series_store.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cvp::analytics {

inline constexpr int kReportSchemaVersion = 1;

struct AnalyticsConfig {
    SegmentationConfig segmentation;
    double harsh_brake_mps2 = 3.5;
    OverspeedConfig overspeed;
    NightWindow night;
    double viability_threshold = 0.05;
};

struct TripSummary {
    Vin vin;
    Timestamp start;
    Timestamp end;
    double distance_km = 0;
    double night_km = 0;
    double max_speed_kmh = 0;
    double mean_speed_kmh = 0;
    int harsh_brake_count = 0;
    double overspeed_km = 0;
    double uncovered_km = 0; // only with a map
    double urban_km = 0;     // only with a map
    std::size_t point_count = 0;
};

/// `map` may be null: overspeed and urban distance stay 0.
TripSummary summarize_trip(const Vin& vin, const Track& trip, const TimeZone& zone, const MapProvider* map,
                           const AnalyticsConfig& config = {});

/// GPS series of `vin` in `range`.
Track load_track(const storage::SeriesStore& series, const Vin& vin, storage::TimeRange range);

std::vector<TripSummary> trip_summaries(const storage::SeriesStore& series, const Vin& vin,
                                        storage::TimeRange range, const TimeZone& zone, const MapProvider* map,
                                        const AnalyticsConfig& config = {});

struct AccidentFlags {
    int accident = 0;
    int breakdown = 0;
    int emergency = 0;

    bool operator==(const AccidentFlags&) const = default;
};

enum class FeatureSource { gps_trips, odometer_polls };

struct RiskFeatureVector {
    Vin vin;
    storage::TimeRange period;
    FeatureSource source = FeatureSource::gps_trips;
    int trip_count = 0;
    double total_km = 0;
    double night_fraction = 0;
    double urban_fraction = 0;
    double overspeed_fraction = 0;
    double harsh_brakes_per_100km = 0;
    AccidentFlags accident_flags{};
};

/// GPS-rich vehicles aggregate their trips. Odometer-only vehicles use the
/// odometer span for the distance and the 22:00/05:00 poll pairs for the
/// night share. Throws NoDataInPeriod.
RiskFeatureVector build_risk_features(const storage::SeriesStore& series, const Vin& vin, storage::TimeRange period,
                                      const TimeZone& zone, const MapProvider* map,
                                      const AnalyticsConfig& config = {});

struct CostVerdict {
    double data_cost_eur_month = 0;
    double premium_eur_month = 0;
    double ratio = 0;
    double threshold = 0;
    bool viable = false;

    std::string_view verdict() const { return viable ? "viable" : "high-value-only"; }
};

/// Throws NonPositivePremium.
CostVerdict cost_viability(double data_cost_eur_month, double premium_eur_month, double threshold = 0.05);

struct TheftReport {
    Vin vin;
    std::optional<bool> locked;
    std::optional<Timestamp> lock_state_at;
    std::optional<Track> last_trajectory;
    Timestamp last_seen_at;
};

/// Throws NoDataForVin.
TheftReport theft_report(const storage::SeriesStore& series, const Vin& vin,
                         const SegmentationConfig& segmentation = {});

Json encode(const TripSummary& t);
Json encode(const RiskFeatureVector& r);
Json encode(const CostVerdict& c);
Json encode(const TheftReport& r);

/// {"schema_version", "vin", "period", "trips", "risk", "cost"}; risk is
/// null when the period has no data.
Json vin_report(const Vin& vin, storage::TimeRange period, const std::vector<TripSummary>& trips,
                const std::optional<RiskFeatureVector>& risk, const std::optional<CostVerdict>& cost);

/// Trip table with a schema_version column first.
std::string trips_csv(const std::vector<TripSummary>& trips);

} // namespace cvp::analytics
