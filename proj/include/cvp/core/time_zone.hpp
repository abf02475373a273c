#pragma once

#include "cvp/core/time.hpp"

#include <chrono>
#include <string>
#include <string_view>

namespace cvp {

/// Minimal zone model: a standard offset plus an optional daylight-saving
/// rule. Covers UTC, fixed offsets ("+02:00") and the EU zones the fleet
/// lives in. GCC 11 ships no tzdb, so the EU rule is encoded directly:
/// +1 h from the last Sunday of March 01:00 UTC to the last Sunday of
/// October 01:00 UTC.
class TimeZone {
public:
    enum class DstRule { None, EuropeanUnion };

    static TimeZone utc();
    static TimeZone fixed(std::chrono::minutes offset);

    /// "UTC", "Europe/Luxembourg", "Europe/Paris", "Europe/London", "+01:00", ...
    /// Throws Error{UnknownTimeZone}.
    static TimeZone named(std::string_view name);

    const std::string& name() const { return name_; }

    std::chrono::minutes offset_at(Timestamp t) const;
    LocalTime to_local(Timestamp t) const;

    /// Nonexistent local times (spring-forward gap) resolve forward by the
    /// gap length; ambiguous ones (fall-back overlap) resolve to the earlier
    /// instant.
    Timestamp to_utc(LocalTime local) const;

    /// Local calendar date containing `t`.
    std::chrono::year_month_day local_date(Timestamp t) const;

    /// UTC instant of `time_of_day` on local date `date`.
    Timestamp at(std::chrono::year_month_day date, Millis time_of_day) const;

    /// Offset of `t` into its local day.
    Millis local_time_of_day(Timestamp t) const;

    bool operator==(const TimeZone& other) const { return name_ == other.name_; }

private:
    TimeZone(std::string name, std::chrono::minutes standard, DstRule rule)
        : name_(std::move(name)), standard_(standard), rule_(rule)
    {
    }

    bool dst_active(Timestamp t) const;

    std::string name_;
    std::chrono::minutes standard_;
    DstRule rule_;
};

} // namespace cvp
