#pragma once

#include "cvp/core/codec.hpp"
#include "cvp/core/profile.hpp"
#include "cvp/core/time_zone.hpp"

#include <deque>
#include <map>

namespace cvp {

/// Admission control for one QuotaSpec. Sliding mode keeps the grant log
/// of the last window; calendar_day mode counts grants per local date of
/// `zone`. `skew` widens the sliding window, for callers mirroring a
/// remote limiter whose clock may disagree with theirs.
class QuotaLimiter {
public:
    explicit QuotaLimiter(QuotaSpec spec, TimeZone zone = TimeZone::utc(), Millis skew = Millis{0});

    /// Records a grant and returns true when a permit is available at `now`.
    bool try_acquire(Timestamp now);

    /// Earliest instant >= now at which try_acquire would succeed.
    Timestamp next_available(Timestamp now) const;

    /// Grants counted against the limit at `now`.
    int in_use(Timestamp now) const;

    const QuotaSpec& spec() const { return spec_; }

    Json state() const;
    void restore(const Json& state);

private:
    Millis effective_window() const { return spec_.window + skew_; }
    void prune(Timestamp now);

    QuotaSpec spec_;
    TimeZone zone_;
    Millis skew_;
    std::deque<Timestamp> grants_;
    std::map<std::chrono::sys_days, int> per_day_;
};

} // namespace cvp
