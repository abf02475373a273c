#include "cvp/core/time.hpp"

#include "cvp/core/error.hpp"

#include <charconv>
#include <cstdio>
#include <thread>

namespace cvp {

using namespace std::chrono;

namespace {

int parse_int(std::string_view text, std::size_t pos, std::size_t len)
{
    if (pos + len > text.size())
        throw Error(Errc::ParseError, "truncated timestamp '" + std::string(text) + "'");
    int value = 0;
    auto first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len)
        throw Error(Errc::ParseError, "bad digits in '" + std::string(text) + "'");
    return value;
}

void expect(std::string_view text, std::size_t pos, char c)
{
    if (pos >= text.size() || text[pos] != c)
        throw Error(Errc::ParseError, "expected '" + std::string(1, c) + "' in '" + std::string(text) + "'");
}

year_month_day checked_date(int y, int m, int d, std::string_view text)
{
    year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        throw Error(Errc::ParseError, "invalid date in '" + std::string(text) + "'");
    return ymd;
}

} // namespace

std::string format_rfc3339(Timestamp t)
{
    auto dp = floor<days>(t);
    year_month_day ymd{dp};
    hh_mm_ss<Millis> hms{t - dp};
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<long>(hms.hours().count()),
                  static_cast<long>(hms.minutes().count()), static_cast<long>(hms.seconds().count()),
                  static_cast<long>(hms.subseconds().count()));
    return buf;
}

Timestamp parse_rfc3339(std::string_view text)
{
    // YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|-HH:MM]
    auto ymd = checked_date(parse_int(text, 0, 4), (expect(text, 4, '-'), parse_int(text, 5, 2)),
                            (expect(text, 7, '-'), parse_int(text, 8, 2)), text);
    if (text.size() <= 10 || (text[10] != 'T' && text[10] != 't' && text[10] != ' '))
        throw Error(Errc::ParseError, "missing time part in '" + std::string(text) + "'");
    int hh = parse_int(text, 11, 2);
    expect(text, 13, ':');
    int mm = parse_int(text, 14, 2);
    expect(text, 16, ':');
    int ss = parse_int(text, 17, 2);
    if (hh > 23 || mm > 59 || ss > 60)
        throw Error(Errc::ParseError, "time out of range in '" + std::string(text) + "'");

    std::size_t pos = 19;
    Millis frac{0};
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        std::size_t start = pos;
        int ms = 0;
        int digits = 0;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
            if (digits < 3) {
                ms = ms * 10 + (text[pos] - '0');
                ++digits;
            }
            ++pos;
        }
        if (pos == start)
            throw Error(Errc::ParseError, "empty fraction in '" + std::string(text) + "'");
        while (digits < 3) {
            ms *= 10;
            ++digits;
        }
        frac = Millis{ms};
    }

    minutes offset{0};
    if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) {
        ++pos;
    } else if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
        int sign = text[pos] == '-' ? -1 : 1;
        int oh = parse_int(text, pos + 1, 2);
        expect(text, pos + 3, ':');
        int om = parse_int(text, pos + 4, 2);
        offset = minutes{sign * (oh * 60 + om)};
        pos += 6;
    } else {
        throw Error(Errc::ParseError, "missing zone designator in '" + std::string(text) + "'");
    }
    if (pos != text.size())
        throw Error(Errc::ParseError, "trailing characters in '" + std::string(text) + "'");

    return Timestamp{sys_days{ymd}.time_since_epoch()} + hours{hh} + minutes{mm} + seconds{ss} + frac - offset;
}

std::string format_date(year_month_day d)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

year_month_day parse_date(std::string_view text)
{
    if (text.size() != 10)
        throw Error(Errc::ParseError, "bad date '" + std::string(text) + "'");
    int y = parse_int(text, 0, 4);
    expect(text, 4, '-');
    int m = parse_int(text, 5, 2);
    expect(text, 7, '-');
    int d = parse_int(text, 8, 2);
    return checked_date(y, m, d, text);
}

Timestamp SystemClock::now() const
{
    return floor<Millis>(system_clock::now());
}

void SystemClock::sleep_for(Millis d)
{
    std::this_thread::sleep_for(d);
}

} // namespace cvp
