#include "cvp/analytics/track.hpp"

#include "cvp/core/error.hpp"
#include "cvp/core/geo.hpp"

#include <optional>

namespace cvp::analytics {

namespace {

void require_ordered(const Track& points)
{
    for (std::size_t i = 1; i < points.size(); ++i)
        if (points[i].t < points[i - 1].t)
            throw Error(Errc::UnorderedPoints, "point " + std::to_string(i) + " is earlier than its predecessor");
}

double seconds(Millis d) { return std::chrono::duration<double>(d).count(); }

} // namespace

bool NightWindow::contains(Millis tod) const
{
    if (starts <= ends)
        return tod >= starts && tod < ends;
    return tod >= starts || tod < ends;
}

double compute_distance(const Track& points)
{
    require_ordered(points);
    double km = 0;
    for (std::size_t i = 1; i < points.size(); ++i)
        km += geo::distance_km(points[i - 1].pos, points[i].pos);
    return km;
}

std::vector<Track> segment_trips(const Track& points, const SegmentationConfig& config)
{
    require_ordered(points);
    std::vector<Track> trips;
    if (points.empty())
        return trips;

    auto emit = [&](std::size_t first, std::size_t last) {
        if (last <= first)
            return;
        Track t(points.begin() + static_cast<std::ptrdiff_t>(first), points.begin() + static_cast<std::ptrdiff_t>(last) + 1);
        if (compute_distance(t) >= config.min_trip_km)
            trips.push_back(std::move(t));
    };

    // `anchor` is the first point of the current dwell candidate: every
    // point since stayed within dwell_radius of it.
    std::size_t begin = 0;
    std::size_t anchor = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (points[i].t - points[i - 1].t > config.idle_gap) {
            emit(begin, points[anchor].t + config.idle_gap < points[i - 1].t ? anchor : i - 1);
            begin = anchor = i;
            continue;
        }
        if (geo::distance_km(points[anchor].pos, points[i].pos) >= config.dwell_radius_km) {
            if (points[i - 1].t - points[anchor].t > config.idle_gap) {
                // Parked from anchor to i-1; the next trip leaves from i-1.
                emit(begin, anchor);
                begin = i - 1;
            }
            anchor = i;
        }
    }
    auto last = points.size() - 1;
    emit(begin, points[last].t - points[anchor].t > config.idle_gap ? anchor : last);
    return trips;
}

std::vector<SpeedSegment> estimate_speeds(const Track& points, Millis idle_gap)
{
    std::vector<SpeedSegment> out;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const auto& a = points[i - 1];
        const auto& b = points[i];
        if (b.t < a.t)
            throw Error(Errc::UnorderedPoints, "point " + std::to_string(i) + " is earlier than its predecessor");
        if (b.t == a.t)
            throw Error(Errc::ZeroTimeDelta, "points " + std::to_string(i - 1) + " and " + std::to_string(i) +
                                                 " share " + format_rfc3339(a.t));
        if (b.t - a.t > idle_gap)
            continue;
        double km = geo::distance_km(a.pos, b.pos);
        out.push_back(SpeedSegment{a, b, km, km / (seconds(b.t - a.t) / 3600.0)});
    }
    return out;
}

std::vector<HarshBrake> detect_harsh_brakes(const std::vector<SpeedSegment>& speeds, double threshold_mps2,
                                            double floor_mps2)
{
    std::vector<HarshBrake> events;
    std::optional<HarshBrake> episode;
    auto close = [&] {
        if (episode && episode->peak_mps2 >= threshold_mps2)
            events.push_back(*episode);
        episode.reset();
    };
    for (std::size_t i = 0; i + 1 < speeds.size(); ++i) {
        const auto& s = speeds[i];
        const auto& n = speeds[i + 1];
        double dt = seconds(n.mid() - s.mid());
        double decel = s.to.t == n.from.t && dt > 0 ? (s.kmh - n.kmh) / 3.6 / dt : 0.0;
        if (decel < floor_mps2) {
            close();
            continue;
        }
        if (!episode)
            episode = HarshBrake{s.mid(), decel, s.kmh, n.kmh};
        episode->peak_mps2 = std::max(episode->peak_mps2, decel);
        episode->to_kmh = n.kmh;
    }
    close();
    return events;
}

double night_km(const Track& points, const TimeZone& zone, NightWindow window)
{
    require_ordered(points);
    double km = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        auto mid = points[i - 1].t + (points[i].t - points[i - 1].t) / 2;
        if (window.contains(zone.local_time_of_day(mid)))
            km += geo::distance_km(points[i - 1].pos, points[i].pos);
    }
    return km;
}

} // namespace cvp::analytics
