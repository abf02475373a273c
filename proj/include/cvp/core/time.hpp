#pragma once

#include <atomic>
#include <chrono>
#include <string>
#include <string_view>

namespace cvp {

using Millis = std::chrono::milliseconds;
using Seconds = std::chrono::seconds;
using Timestamp = std::chrono::sys_time<Millis>;
using LocalTime = std::chrono::local_time<Millis>;

/// RFC 3339 UTC with millisecond precision, e.g. 2022-03-01T05:00:00.000Z.
std::string format_rfc3339(Timestamp t);

/// Accepts a trailing `Z` or a numeric offset, with or without fractional
/// seconds. Throws Error{ParseError}.
Timestamp parse_rfc3339(std::string_view text);

std::string format_date(std::chrono::year_month_day d);
std::chrono::year_month_day parse_date(std::string_view text);

inline Timestamp from_unix_ms(std::int64_t ms) { return Timestamp{Millis{ms}}; }
inline std::int64_t to_unix_ms(Timestamp t) { return t.time_since_epoch().count(); }

constexpr Millis kDay = std::chrono::days{1};
constexpr Millis kHour = std::chrono::hours{1};
constexpr Millis kMinute = std::chrono::minutes{1};

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;

    // Simulated clocks advance instead of blocking.
    virtual void sleep_for(Millis d) = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() const override;
    void sleep_for(Millis d) override;
};

class SimClock final : public Clock {
public:
    explicit SimClock(Timestamp start = Timestamp{}) : now_ms_(to_unix_ms(start)) {}

    Timestamp now() const override { return from_unix_ms(now_ms_.load()); }
    void sleep_for(Millis d) override { advance(d); }

    void set(Timestamp t) { now_ms_.store(to_unix_ms(t)); }
    void advance(Millis d) { now_ms_.fetch_add(d.count()); }

private:
    std::atomic<std::int64_t> now_ms_;
};

} // namespace cvp
