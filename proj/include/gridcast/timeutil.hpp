#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace gridcast {

// Naive local time. No time-zone or daylight-saving handling.

inline std::int64_t days_from_civil(int year, unsigned month, unsigned day) {
    using namespace std::chrono;
    return sys_days{std::chrono::year{year} / std::chrono::month{month} / std::chrono::day{day}}
        .time_since_epoch()
        .count();
}

inline std::chrono::year_month_day civil_from_days(std::int64_t days) {
    return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days}}};
}

inline bool valid_civil(int year, unsigned month, unsigned day) {
    return std::chrono::year_month_day{std::chrono::year{year}, std::chrono::month{month},
                                       std::chrono::day{day}}
        .ok();
}

/// Hours since 1970-01-01 00:00.
class HourStamp {
public:
    constexpr HourStamp() = default;
    constexpr explicit HourStamp(std::int64_t hours) : hours_(hours) {}

    static HourStamp from_civil(int year, unsigned month, unsigned day, unsigned hour) {
        return HourStamp(days_from_civil(year, month, day) * 24 + hour);
    }

    constexpr std::int64_t hours() const { return hours_; }
    constexpr std::int64_t day_index() const { return floor_div(hours_, 24); }
    constexpr unsigned hour_of_day() const { return static_cast<unsigned>(hours_ - day_index() * 24); }

    /// Monday = 0 ... Sunday = 6.
    unsigned weekday() const {
        return std::chrono::weekday{std::chrono::sys_days{std::chrono::days{day_index()}}}
                   .iso_encoding() -
               1;
    }
    std::chrono::year_month_day date() const { return civil_from_days(day_index()); }
    int year() const { return static_cast<int>(date().year()); }
    /// January = 1.
    unsigned month() const { return static_cast<unsigned>(date().month()); }

    constexpr HourStamp operator+(std::int64_t h) const { return HourStamp(hours_ + h); }
    constexpr HourStamp operator-(std::int64_t h) const { return HourStamp(hours_ - h); }
    constexpr std::int64_t operator-(HourStamp o) const { return hours_ - o.hours_; }
    constexpr auto operator<=>(const HourStamp&) const = default;

    std::string iso() const {
        auto ymd = date();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02u:00:00", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                      hour_of_day());
        return buf;
    }

private:
    static constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
        std::int64_t q = a / b;
        return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
    }

    std::int64_t hours_ = 0;
};

namespace detail {

inline std::optional<unsigned> parse_uint(std::string_view s) {
    unsigned v = 0;
    if (s.empty()) return std::nullopt;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<int> month_from_abbrev(std::string_view s) {
    static constexpr std::string_view names[] = {"jan", "feb", "mar", "apr", "may", "jun",
                                                 "jul", "aug", "sep", "oct", "nov", "dec"};
    if (s.size() < 3) return std::nullopt;
    char lower[3];
    for (int i = 0; i < 3; ++i) lower[i] = static_cast<char>(s[i] | 0x20);
    for (int m = 0; m < 12; ++m)
        if (std::string_view(lower, 3) == names[m]) return m + 1;
    return std::nullopt;
}

} // namespace detail

/// Accepts YYYY-MM-DD, D/M/YYYY and D-Mon-YY (two-digit years map to 20YY).
/// Returns days since epoch.
inline std::optional<std::int64_t> parse_date(std::string_view s) {
    using detail::parse_uint;
    int y = 0;
    unsigned m = 0, d = 0;
    if (s.size() == 10 && s[4] == '-' && s[7] == '-') {
        auto yy = parse_uint(s.substr(0, 4)), mm = parse_uint(s.substr(5, 2)), dd = parse_uint(s.substr(8, 2));
        if (!yy || !mm || !dd) return std::nullopt;
        y = static_cast<int>(*yy), m = *mm, d = *dd;
    } else if (auto a = s.find('/'); a != std::string_view::npos) {
        auto b = s.find('/', a + 1);
        if (b == std::string_view::npos) return std::nullopt;
        auto dd = parse_uint(s.substr(0, a)), mm = parse_uint(s.substr(a + 1, b - a - 1)),
             yy = parse_uint(s.substr(b + 1));
        if (!yy || !mm || !dd) return std::nullopt;
        y = static_cast<int>(*yy < 100 ? 2000 + *yy : *yy), m = *mm, d = *dd;
    } else if (auto a2 = s.find('-'); a2 != std::string_view::npos) {
        auto b = s.find('-', a2 + 1);
        if (b == std::string_view::npos) return std::nullopt;
        auto dd = parse_uint(s.substr(0, a2));
        auto mm = detail::month_from_abbrev(s.substr(a2 + 1, b - a2 - 1));
        auto yy = parse_uint(s.substr(b + 1));
        if (!yy || !mm || !dd) return std::nullopt;
        y = static_cast<int>(*yy < 100 ? 2000 + *yy : *yy), m = static_cast<unsigned>(*mm), d = *dd;
    } else {
        return std::nullopt;
    }
    if (!valid_civil(y, m, d)) return std::nullopt;
    return days_from_civil(y, m, d);
}

/// Parses "HH:MM[:SS]"; returns minutes after midnight (24:00 allowed).
inline std::optional<std::int64_t> parse_clock(std::string_view s) {
    auto a = s.find(':');
    if (a == std::string_view::npos) return std::nullopt;
    auto b = s.find(':', a + 1);
    auto hh = detail::parse_uint(s.substr(0, a));
    auto mm = detail::parse_uint(s.substr(a + 1, b == std::string_view::npos ? std::string_view::npos : b - a - 1));
    if (!hh || !mm || *hh > 24 || *mm > 59) return std::nullopt;
    if (b != std::string_view::npos) {
        auto ss = detail::parse_uint(s.substr(b + 1));
        if (!ss || *ss != 0) return std::nullopt;
    }
    return static_cast<std::int64_t>(*hh) * 60 + *mm;
}

/// "YYYY-MM-DD HH:MM[:SS]" or with a 'T' separator. Returns minutes since epoch.
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '"')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '"')) s.remove_prefix(1);
    auto sep = s.find_first_of(" T");
    if (sep == std::string_view::npos) {
        auto d = parse_date(s);
        if (!d) return std::nullopt;
        return *d * 1440;
    }
    auto d = parse_date(s.substr(0, sep));
    auto c = parse_clock(s.substr(sep + 1));
    if (!d || !c) return std::nullopt;
    return *d * 1440 + *c;
}

} // namespace gridcast
