#include "cvp/sim/trace.hpp"

#include "cvp/core/error.hpp"
#include "cvp/core/geo.hpp"
#include "cvp/sim/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cvp::sim {

using namespace std::chrono;
using namespace std::chrono_literals;

namespace {

constexpr double kDt = 0.05;
constexpr int kStepsPerSecond = 20;
constexpr double kGentle = 1.5;        // m/s^2, ordinary speed changes
constexpr double kHarshThreshold = 3.5; // scripted legs at or beyond this count as brakes
constexpr double kSteadyBeforeBrake = 2.0;
constexpr double kHoldAfterBrake = 2.0;
constexpr double kBrakeSpacing = 15.0;

double wrap_heading(double h)
{
    h = std::fmod(h, 360.0);
    return h < 0 ? h + 360.0 : h;
}

bool in_night(const TimeZone& zone, Timestamp t)
{
    auto tod = zone.local_time_of_day(t);
    return tod >= 22h || tod < 5h;
}

Timestamp at_offset(Timestamp start, double seconds)
{
    return start + Millis{std::llround(seconds * 1000.0)};
}

struct RouteLeg {
    GeoPoint start;
    double heading;
    double from_m;
    double length_m;
    double target_mps;
};

struct Route {
    std::vector<RouteLeg> legs;

    const RouteLeg& leg_at(double s) const
    {
        auto it = std::upper_bound(legs.begin(), legs.end(), s,
                                   [](double v, const RouteLeg& l) { return v < l.from_m; });
        return it == legs.begin() ? legs.front() : *std::prev(it);
    }

    GeoPoint position(double s) const
    {
        const RouteLeg& l = leg_at(s);
        return geo::destination(l.start, l.heading, (s - l.from_m) / 1000.0);
    }
};

Route build_route(Rng& rng, const SpeedProfile& sp, const GeoPoint& from, double heading, double length_m)
{
    Route r;
    double total = sp.urban_share + sp.rural_share + sp.highway_share;
    double covered = 0;
    GeoPoint p = from;
    // A few spare legs past the end absorb the final stop's overshoot.
    while (covered < length_m + 2000) {
        double u = rng.uniform() * total;
        double len, kmh;
        if (u < sp.urban_share) {
            len = rng.uniform(300, 1500);
            kmh = sp.urban_kmh;
        } else if (u < sp.urban_share + sp.rural_share) {
            len = rng.uniform(1000, 4000);
            kmh = sp.rural_kmh;
        } else {
            len = rng.uniform(2000, 8000);
            kmh = sp.highway_kmh;
        }
        kmh *= rng.uniform(0.9, 1.1);
        if (!r.legs.empty())
            heading = wrap_heading(heading + rng.uniform(-30, 30));
        r.legs.push_back({p, heading, covered, len, kmh / 3.6});
        p = geo::destination(p, heading, len / 1000.0);
        covered += len;
    }
    return r;
}

// Collects the 1 Hz samples and the night share while a trip integrates.
class Recorder {
public:
    Recorder(Trip& trip, const TimeZone& zone) : trip_(trip), zone_(zone) {}

    void sample(double t, double s, double v, double heading, const GeoPoint& pos)
    {
        MotionSample m{at_offset(trip_.start, t), pos, v * 3.6, wrap_heading(heading), s / 1000.0};
        if (!trip_.samples.empty() && trip_.samples.back().t == m.t)
            trip_.samples.back() = m;
        else
            trip_.samples.push_back(m);
    }

    void step(double t, double dt, double ds)
    {
        if (in_night(zone_, at_offset(trip_.start, t + dt / 2)))
            night_m_ += ds;
    }

    void finish(double t, double s)
    {
        trip_.end = at_offset(trip_.start, t);
        trip_.distance_km = s / 1000.0;
        trip_.night_km = std::min(night_m_ / 1000.0, trip_.distance_km);
    }

private:
    Trip& trip_;
    const TimeZone& zone_;
    double night_m_ = 0;
};

Millis duration_bound(double km)
{
    // conservative: 25 km/h door to door plus slack
    return duration_cast<Millis>(duration<double>(km / 25.0 * 3600.0)) + 5min;
}

} // namespace

std::vector<TripPlan> plan_trips(const TripModel& model, const TimeZone& zone, Timestamp start, int days,
                                 std::uint64_t seed)
{
    validate(model);
    if (days < 1)
        throw Error(Errc::InvalidConfig, "days must be >= 1");
    Rng rng(seed);

    struct Draft {
        int day;
        double km;
        bool night;
        std::uint64_t seed;
    };
    std::vector<Draft> drafts;
    const double lo_km = std::max(0.5, 0.2 * model.trip_length_km_mean);
    const double hi_km = model.trip_length_km_mean + 3 * model.trip_length_km_spread;
    for (int d = 0; d < days; ++d) {
        int n = rng.poisson(model.trips_per_day);
        for (int i = 0; i < n; ++i) {
            double km = std::clamp(rng.normal(model.trip_length_km_mean, model.trip_length_km_spread), lo_km,
                                   std::max(lo_km, hi_km));
            drafts.push_back({d, km, false, rng.next()});
        }
    }

    // Greedy rounding keeps the night share of distance on target.
    double total = 0, night = 0;
    for (auto& dr : drafts) {
        total += dr.km;
        if (night + dr.km / 2 < model.night_trip_fraction * total) {
            dr.night = true;
            night += dr.km;
        }
    }

    const sys_days first{zone.local_date(start)};
    std::vector<TripPlan> plans;
    auto place = [&](std::vector<const Draft*> group, Timestamp lo, Timestamp end_by) {
        lo = std::max(lo, start + 1min);
        std::vector<std::pair<Timestamp, const Draft*>> starts;
        for (const Draft* dr : group) {
            Timestamp hi = end_by - duration_bound(dr->km);
            if (hi <= lo) {
                rng.next();
                continue;
            }
            double span = static_cast<double>((hi - lo).count());
            starts.emplace_back(lo + Millis{static_cast<std::int64_t>(rng.uniform() * span)}, dr);
        }
        std::stable_sort(starts.begin(), starts.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        Timestamp free_at = lo;
        for (auto& [s, dr] : starts) {
            s = ceil<seconds>(std::max(s, free_at));
            Timestamp done = s + duration_bound(dr->km);
            if (done > end_by)
                continue;
            plans.push_back({0, s, dr->km, dr->night, dr->seed});
            free_at = done + 10min;
        }
    };

    std::size_t i = 0;
    for (int d = 0; d < days; ++d) {
        std::vector<const Draft*> day_group, night_group;
        for (; i < drafts.size() && drafts[i].day == d; ++i)
            (drafts[i].night ? night_group : day_group).push_back(&drafts[i]);
        year_month_day date{first + std::chrono::days{d}};
        year_month_day next{first + std::chrono::days{d + 1}};
        place(day_group, zone.at(date, 6h + 30min), zone.at(date, 21h + 45min));
        place(night_group, zone.at(date, 22h), zone.at(next, 4h + 55min));
    }

    std::sort(plans.begin(), plans.end(), [](const TripPlan& a, const TripPlan& b) { return a.start < b.start; });
    for (std::size_t k = 0; k < plans.size(); ++k)
        plans[k].id = static_cast<int>(k);
    return plans;
}

Trip realize_trip(const TripPlan& plan, const TripModel& model, const TimeZone& zone, const GeoPoint& from,
                  double initial_heading)
{
    Rng rng(plan.seed);
    const double length_m = plan.length_km * 1000.0;
    Route route = build_route(rng, model.speed_profile, from, wrap_heading(initial_heading), length_m);

    std::vector<double> brake_at;
    int n_brakes = rng.poisson(model.harsh_brake_rate * plan.length_km / 100.0);
    for (int k = 0; k < n_brakes; ++k)
        brake_at.push_back(rng.uniform(0.05, 0.9) * length_m);
    std::sort(brake_at.begin(), brake_at.end());

    Trip trip;
    trip.id = plan.id;
    trip.start = plan.start;
    trip.night = plan.night;
    Recorder rec(trip, zone);

    enum class Mode { cruise, brake, hold, stop };
    Mode mode = Mode::cruise;
    double s = 0, v = 0, t = 0;
    long step = 0;
    double steady = 0, last_brake = -1e9, floor_v = 0, decel = 0, hold_left = 0;
    std::size_t next_brake = 0;

    rec.sample(0, 0, 0, route.legs.front().heading, from);
    while (t < 6 * 3600.0) {
        const RouteLeg& leg = route.leg_at(s);
        const double rem = length_m - s;
        double a = 0;

        if ((mode == Mode::cruise || mode == Mode::hold) && v > 0 && rem <= v * v / (2 * kGentle) + v * kDt + 0.5)
            mode = Mode::stop;

        if (mode == Mode::cruise && next_brake < brake_at.size() && s >= brake_at[next_brake] &&
            steady >= kSteadyBeforeBrake && t - last_brake >= kBrakeSpacing &&
            rem > v * v / (2 * kGentle) + 250.0) {
            double max_dv = v * 3.6 - 5.0;
            if (max_dv >= 30.0) {
                double dv = std::min(rng.uniform(30, 50), max_dv);
                floor_v = v - dv / 3.6;
                decel = rng.uniform(6, 7);
                mode = Mode::brake;
                last_brake = t;
                trip.harsh_brakes.push_back(at_offset(trip.start, t));
                ++next_brake;
            }
        }

        switch (mode) {
        case Mode::cruise: {
            double dv = leg.target_mps - v;
            a = std::abs(dv) < 1e-9 ? 0.0 : std::clamp(dv / kDt, -kGentle, kGentle);
            break;
        }
        case Mode::brake:
            a = -decel;
            if (v + a * kDt <= floor_v) {
                a = (floor_v - v) / kDt;
                mode = Mode::hold;
                hold_left = kHoldAfterBrake;
            }
            break;
        case Mode::hold:
            hold_left -= kDt;
            if (hold_left <= 1e-9)
                mode = Mode::cruise;
            break;
        case Mode::stop:
            a = rem > 1e-6 ? -v * v / (2 * rem) : -kGentle;
            a = std::max(a, -2.0);
            if (v + a * kDt <= 1e-9) {
                // come to rest inside this step
                double dt = v / -a;
                double ds = v * dt / 2;
                rec.step(t, dt, ds);
                s += ds;
                t += dt;
                rec.sample(t, s, 0, route.leg_at(s).heading, route.position(s));
                rec.finish(t, s);
                return trip;
            }
            break;
        }

        steady = (mode == Mode::cruise && a == 0) ? steady + kDt : 0;
        double v2 = std::max(0.0, v + a * kDt);
        double ds = (v + v2) / 2 * kDt;
        rec.step(t, kDt, ds);
        s += ds;
        v = v2;
        ++step;
        t = static_cast<double>(step) * kDt;
        if (step % kStepsPerSecond == 0)
            rec.sample(t, s, v, route.leg_at(s).heading, route.position(s));
    }
    throw Error(Errc::InvalidConfig, "trip did not terminate");
}

Trace generate_trace(const SimVehicleConfig& config, Timestamp start, int days, std::uint64_t seed)
{
    const TimeZone zone = TimeZone::named(config.time_zone);
    auto plans = plan_trips(config.trip_model, zone, start, days, seed);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    GeoPoint at = config.home;
    Trace trace;
    trace.reserve(plans.size());
    for (const auto& plan : plans) {
        // wander, but drift back towards home
        double heading = geo::distance_km(at, config.home) > 1.0
                             ? geo::bearing_deg(at, config.home) + rng.uniform(-30, 30)
                             : rng.uniform(0, 360);
        trace.push_back(realize_trip(plan, config.trip_model, zone, at, heading));
        at = trace.back().samples.back().pos;
    }
    return trace;
}

Trip scripted_trip(int id, Timestamp start, const GeoPoint& from, const std::vector<Leg>& legs, const TimeZone& zone)
{
    Trip trip;
    trip.id = id;
    trip.start = start;
    trip.night = in_night(zone, start);
    Recorder rec(trip, zone);

    double s = 0, v = 0, t = 0;
    long step = 0;
    GeoPoint leg_start = from;
    double leg_from = 0;
    bool braking = false;
    rec.sample(0, 0, 0, legs.empty() ? 0 : legs.front().heading, from);
    for (const Leg& leg : legs) {
        bool harsh = leg.accel_mps2 <= -kHarshThreshold;
        if (harsh && !braking && v > 0)
            trip.harsh_brakes.push_back(at_offset(start, t));
        braking = harsh;
        long steps = std::lround(leg.seconds / kDt);
        for (long k = 0; k < steps; ++k) {
            double v2 = std::max(0.0, v + leg.accel_mps2 * kDt);
            double ds = (v + v2) / 2 * kDt;
            rec.step(t, kDt, ds);
            s += ds;
            v = v2;
            ++step;
            t = static_cast<double>(step) * kDt;
            if (step % kStepsPerSecond == 0)
                rec.sample(t, s, v, leg.heading, geo::destination(leg_start, leg.heading, (s - leg_from) / 1000.0));
        }
        leg_start = geo::destination(leg_start, leg.heading, (s - leg_from) / 1000.0);
        leg_from = s;
    }
    rec.sample(t, s, v, legs.empty() ? 0 : legs.back().heading, leg_start);
    rec.finish(t, s);
    return trip;
}

double night_km_of(const std::vector<MotionSample>& samples, const TimeZone& zone)
{
    double km = 0;
    for (std::size_t i = 1; i < samples.size(); ++i) {
        Timestamp mid = samples[i - 1].t + (samples[i].t - samples[i - 1].t) / 2;
        if (in_night(zone, mid))
            km += geo::distance_km(samples[i - 1].pos, samples[i].pos);
    }
    return km;
}

std::string export_trace_jsonl(const Trace& trace)
{
    std::string out;
    for (const Trip& trip : trace) {
        Json samples = Json::array();
        for (const auto& m : trip.samples)
            samples.push_back({to_unix_ms(m.t), m.pos.lat, m.pos.lon, m.speed_kmh, m.heading, m.distance_km});
        Json brakes = Json::array();
        for (auto b : trip.harsh_brakes)
            brakes.push_back(b);
        Json row{{"id", trip.id},
                 {"start", trip.start},
                 {"end", trip.end},
                 {"night", trip.night},
                 {"distance_km", trip.distance_km},
                 {"night_km", trip.night_km},
                 {"harsh_brakes", brakes},
                 {"samples", samples}};
        out += row.dump();
        out += '\n';
    }
    return out;
}

Trace import_trace_jsonl(std::istream& in)
{
    Trace trace;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        Json row = parse_json(line);
        try {
            Trip trip;
            trip.id = row.at("id").get<int>();
            trip.start = row.at("start").get<Timestamp>();
            trip.end = row.at("end").get<Timestamp>();
            trip.night = row.at("night").get<bool>();
            trip.distance_km = row.at("distance_km").get<double>();
            trip.night_km = row.at("night_km").get<double>();
            for (const auto& b : row.at("harsh_brakes"))
                trip.harsh_brakes.push_back(b.get<Timestamp>());
            for (const auto& m : row.at("samples"))
                trip.samples.push_back({from_unix_ms(m.at(0).get<std::int64_t>()),
                                        {m.at(1).get<double>(), m.at(2).get<double>()},
                                        m.at(3).get<double>(),
                                        m.at(4).get<double>(),
                                        m.at(5).get<double>()});
            trace.push_back(std::move(trip));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ParseError, e.what());
        }
    }
    return trace;
}

} // namespace cvp::sim
