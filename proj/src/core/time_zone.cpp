#include "cvp/core/time_zone.hpp"

#include "cvp/core/error.hpp"

#include <array>
#include <cstdio>

namespace cvp {

using namespace std::chrono;

namespace {

struct NamedZone {
    std::string_view name;
    int standard_minutes;
    TimeZone::DstRule rule;
};

constexpr std::array kZones{
    NamedZone{"UTC", 0, TimeZone::DstRule::None},
    NamedZone{"Etc/UTC", 0, TimeZone::DstRule::None},
    NamedZone{"Europe/London", 0, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Lisbon", 0, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Luxembourg", 60, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Paris", 60, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Brussels", 60, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Berlin", 60, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Amsterdam", 60, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Rome", 60, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Madrid", 60, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Vienna", 60, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Athens", 120, TimeZone::DstRule::EuropeanUnion},
    NamedZone{"Europe/Helsinki", 120, TimeZone::DstRule::EuropeanUnion},
};

Timestamp last_sunday_0100_utc(year y, month m)
{
    sys_days last{year_month_day_last{y, month_day_last{m}}};
    weekday wd{last};
    sys_days sunday = last - (wd - Sunday);
    return Timestamp{sunday.time_since_epoch()} + hours{1};
}

} // namespace

TimeZone TimeZone::utc()
{
    return TimeZone("UTC", minutes{0}, DstRule::None);
}

TimeZone TimeZone::fixed(minutes offset)
{
    char buf[48];
    long total = offset.count();
    char sign = total < 0 ? '-' : '+';
    total = total < 0 ? -total : total;
    std::snprintf(buf, sizeof buf, "%c%02ld:%02ld", sign, total / 60, total % 60);
    return TimeZone(buf, offset, DstRule::None);
}

TimeZone TimeZone::named(std::string_view name)
{
    for (const auto& z : kZones)
        if (z.name == name)
            return TimeZone(std::string(name), minutes{z.standard_minutes}, z.rule);

    if (name.size() == 6 && (name[0] == '+' || name[0] == '-') && name[3] == ':') {
        auto digit = [&](std::size_t i) {
            if (name[i] < '0' || name[i] > '9')
                throw Error(Errc::UnknownTimeZone, std::string(name));
            return name[i] - '0';
        };
        int h = digit(1) * 10 + digit(2);
        int m = digit(4) * 10 + digit(5);
        if (h > 14 || m > 59)
            throw Error(Errc::UnknownTimeZone, std::string(name));
        int total = h * 60 + m;
        return fixed(minutes{name[0] == '-' ? -total : total});
    }
    throw Error(Errc::UnknownTimeZone, std::string(name));
}

bool TimeZone::dst_active(Timestamp t) const
{
    if (rule_ == DstRule::None)
        return false;
    year y = year_month_day{floor<days>(t)}.year();
    return t >= last_sunday_0100_utc(y, March) && t < last_sunday_0100_utc(y, October);
}

minutes TimeZone::offset_at(Timestamp t) const
{
    return dst_active(t) ? standard_ + hours{1} : standard_;
}

LocalTime TimeZone::to_local(Timestamp t) const
{
    return LocalTime{(t + offset_at(t)).time_since_epoch()};
}

Timestamp TimeZone::to_utc(LocalTime local) const
{
    const Timestamp as_utc{local.time_since_epoch()};
    if (rule_ == DstRule::None)
        return as_utc - standard_;

    const minutes summer = standard_ + hours{1};
    const Timestamp with_summer = as_utc - summer;
    const Timestamp with_standard = as_utc - standard_;
    // Earlier candidate first so overlaps pick the first occurrence.
    if (offset_at(with_summer) == summer)
        return with_summer;
    if (offset_at(with_standard) == standard_)
        return with_standard;
    // Gap: the wall clock jumped forward over this time.
    return with_standard;
}

year_month_day TimeZone::local_date(Timestamp t) const
{
    return year_month_day{floor<days>(to_local(t))};
}

Timestamp TimeZone::at(year_month_day date, Millis time_of_day) const
{
    return to_utc(LocalTime{local_days{date}.time_since_epoch()} + time_of_day);
}

Millis TimeZone::local_time_of_day(Timestamp t) const
{
    auto local = to_local(t);
    return local - floor<days>(local);
}

} // namespace cvp
