#include "cvp/analytics/speed_map.hpp"

#include "cvp/core/error.hpp"
#include "cvp/core/geo.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace cvp::analytics {

void SpeedLimitMap::add(MapSegment segment)
{
    auto fail = [&](const std::string& why) { throw Error(Errc::InvalidConfig, "segment " + segment.id + ": " + why); };
    if (segment.id.empty())
        fail("empty id");
    if (segment.limit_kmh < 20 || segment.limit_kmh > 130)
        fail("limit " + std::to_string(segment.limit_kmh) + " km/h outside 20..130");
    if (segment.polyline.size() < 2)
        fail("needs at least two points");
    for (std::size_t i = 1; i < segment.polyline.size(); ++i)
        if (segment.polyline[i] == segment.polyline[i - 1])
            fail("repeated point");
    for (const auto& s : segments_)
        if (s.id == segment.id)
            fail("duplicate id");
    segments_.push_back(std::move(segment));
}

std::optional<RoadInfo> SpeedLimitMap::road_at(const GeoPoint& p, double radius_km) const
{
    const MapSegment* best = nullptr;
    double best_km = std::numeric_limits<double>::infinity();
    for (const auto& s : segments_)
        for (std::size_t i = 1; i < s.polyline.size(); ++i) {
            double d = geo::distance_to_segment_km(p, s.polyline[i - 1], s.polyline[i]);
            if (d < best_km) {
                best_km = d;
                best = &s;
            }
        }
    if (!best || best_km > radius_km)
        return std::nullopt;
    return RoadInfo{best->id, best->road_class, best->limit_kmh};
}

namespace {

double parse_double(std::string_view s, int line)
{
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(Errc::ParseError, "line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
}

} // namespace

SpeedLimitMap parse_speed_map(std::istream& in)
{
    SpeedLimitMap map;
    std::string text;
    int line = 0;
    while (std::getline(in, text)) {
        ++line;
        std::istringstream words(text);
        std::string word;
        if (!(words >> word) || word[0] == '#')
            continue;
        auto fail = [&](const std::string& why) {
            throw Error(Errc::ParseError, "line " + std::to_string(line) + ": " + why);
        };
        if (word != "segment")
            fail("expected 'segment', got '" + word + "'");
        MapSegment seg;
        std::string road_class, limit;
        if (!(words >> seg.id >> road_class >> limit))
            fail("expected: segment <id> <class> <limit_kmh> lat,lon ...");
        try {
            seg.road_class = parse_road_class(road_class);
        } catch (const Error&) {
            fail("unknown road class '" + road_class + "'");
        }
        seg.limit_kmh = static_cast<int>(parse_double(limit, line));
        if (seg.limit_kmh != parse_double(limit, line))
            fail("limit must be a whole number");
        while (words >> word) {
            auto comma = word.find(',');
            if (comma == std::string::npos)
                fail("expected lat,lon, got '" + word + "'");
            GeoPoint p{parse_double(std::string_view(word).substr(0, comma), line),
                       parse_double(std::string_view(word).substr(comma + 1), line)};
            if (p.lat < -90 || p.lat > 90 || p.lon < -180 || p.lon > 180)
                fail("coordinate out of range: " + word);
            seg.polyline.push_back(p);
        }
        map.add(std::move(seg));
    }
    return map;
}

SpeedLimitMap load_speed_map(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(Errc::StorageIo, "cannot open speed map " + path);
    return parse_speed_map(in);
}

std::string format_speed_map(const SpeedLimitMap& map)
{
    std::string out;
    for (const auto& s : map.segments()) {
        out += "segment " + s.id + " " + std::string(to_string(s.road_class)) + " " + std::to_string(s.limit_kmh);
        for (const auto& p : s.polyline) {
            char buf[64];
            std::snprintf(buf, sizeof buf, " %.7f,%.7f", p.lat, p.lon);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

OverspeedResult compute_overspeed(const Track& points, const MapProvider& map, const OverspeedConfig& config)
{
    if (map.empty())
        throw Error(Errc::EmptyMap, "speed limit map has no segments");
    OverspeedResult r;
    for (const auto& s : estimate_speeds(points, config.idle_gap)) {
        r.distance_km += s.km;
        auto road = map.road_at(geo::midpoint(s.from.pos, s.to.pos), config.match_radius_km);
        if (!road) {
            r.uncovered_km += s.km;
            continue;
        }
        auto& c = r.by_class[road->road_class];
        c.km += s.km;
        if (s.kmh > road->limit_kmh + config.tolerance_kmh) {
            c.overspeed_km += s.km;
            r.overspeed_km += s.km;
        }
    }
    return r;
}

} // namespace cvp::analytics
