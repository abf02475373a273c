#include "cvp/core/quota.hpp"

namespace cvp {

using namespace std::chrono;

QuotaLimiter::QuotaLimiter(QuotaSpec spec, TimeZone zone, Millis skew)
    : spec_(spec), zone_(std::move(zone)), skew_(skew)
{
}

void QuotaLimiter::prune(Timestamp now)
{
    while (!grants_.empty() && grants_.front() <= now - effective_window())
        grants_.pop_front();
    if (spec_.mode == QuotaMode::calendar_day) {
        auto today = sys_days{zone_.local_date(now)};
        while (!per_day_.empty() && per_day_.begin()->first < today)
            per_day_.erase(per_day_.begin());
    }
}

int QuotaLimiter::in_use(Timestamp now) const
{
    if (spec_.mode == QuotaMode::calendar_day) {
        auto it = per_day_.find(sys_days{zone_.local_date(now)});
        return it == per_day_.end() ? 0 : it->second;
    }
    int n = 0;
    for (auto g : grants_)
        n += g > now - effective_window() && g <= now;
    return n;
}

bool QuotaLimiter::try_acquire(Timestamp now)
{
    prune(now);
    if (in_use(now) >= spec_.max_requests)
        return false;
    if (spec_.mode == QuotaMode::calendar_day)
        ++per_day_[sys_days{zone_.local_date(now)}];
    else
        grants_.push_back(now);
    return true;
}

Timestamp QuotaLimiter::next_available(Timestamp now) const
{
    if (in_use(now) < spec_.max_requests)
        return now;
    if (spec_.mode == QuotaMode::calendar_day) {
        auto tomorrow = sys_days{zone_.local_date(now)} + days{1};
        return zone_.at(year_month_day{tomorrow}, Millis{0});
    }
    std::vector<Timestamp> live;
    for (auto g : grants_)
        if (g > now - effective_window() && g <= now)
            live.push_back(g);
    // The permit frees up once the grant that keeps the count at max ages out.
    return live[live.size() - spec_.max_requests] + effective_window();
}

Json QuotaLimiter::state() const
{
    Json grants = Json::array();
    for (auto g : grants_)
        grants.push_back(to_unix_ms(g));
    Json days = Json::object();
    for (const auto& [d, n] : per_day_)
        days[format_date(year_month_day{d})] = n;
    return Json{{"grants_ms", grants}, {"per_day", days}};
}

void QuotaLimiter::restore(const Json& state)
{
    grants_.clear();
    per_day_.clear();
    for (const auto& g : state.value("grants_ms", Json::array()))
        grants_.push_back(from_unix_ms(g.get<std::int64_t>()));
    Json days = state.value("per_day", Json::object());
    for (const auto& [d, n] : days.items())
        per_day_[sys_days{parse_date(d)}] = n.get<int>();
}

} // namespace cvp
