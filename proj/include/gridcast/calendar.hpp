#pragma once

#include "gridcast/dataset.hpp"
#include "gridcast/error.hpp"
#include "gridcast/timeutil.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <vector>

namespace gridcast {

inline constexpr std::size_t kCalendarFeatures = 9;

/// Cyclic hour/weekday/month encodings plus three binary day-type flags.
struct FeatureVector {
    double hour_sin = 0, hour_cos = 0;
    double dow_sin = 0, dow_cos = 0;
    double month_sin = 0, month_cos = 0;
    double is_workday = 0, is_holiday = 0, next_day_workday = 0;

    std::array<double, kCalendarFeatures> as_array() const {
        return {hour_sin, hour_cos, dow_sin, dow_cos, month_sin, month_cos, is_workday, is_holiday, next_day_workday};
    }
};

/// Public holidays of one region, held as explicit dates over a covered year range.
class HolidayCalendar {
public:
    /// A calendar without holidays that covers every year.
    static HolidayCalendar none() {
        HolidayCalendar cal;
        cal.first_year_ = std::numeric_limits<int>::min();
        cal.last_year_ = std::numeric_limits<int>::max();
        return cal;
    }

    /// CSV with a "date,name" header and ISO dates. Coverage spans the first to last listed year.
    static HolidayCalendar from_csv(const std::filesystem::path& path, Region region) {
        if (!std::filesystem::exists(path)) throw Error(ErrorCode::FileNotFound, path.string());
        std::ifstream in(path);
        HolidayCalendar cal;
        cal.region_ = region;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#' || line.rfind("date", 0) == 0) continue;
            auto day = parse_date(std::string_view(line).substr(0, line.find(',')));
            if (!day) throw Error(ErrorCode::MalformedRow, path.string() + " line " + std::to_string(line_no));
            cal.add(*day);
        }
        if (cal.days_.empty()) throw Error(ErrorCode::EmptyDataset, path.string() + " lists no holidays");
        return cal;
    }

    /// Default calendar file for a region inside a data directory.
    static std::filesystem::path default_file(const std::filesystem::path& data_dir, Region region) {
        return data_dir / "holidays" / "v1" / (std::string(to_string(region)) + ".csv");
    }

    void add(std::int64_t day) {
        days_.insert(day);
        const int y = static_cast<int>(civil_from_days(day).year());
        if (first_year_ > last_year_) first_year_ = last_year_ = y;
        first_year_ = std::min(first_year_, y);
        last_year_ = std::max(last_year_, y);
    }

    void set_coverage(int first_year, int last_year) {
        first_year_ = first_year;
        last_year_ = last_year;
    }

    bool covers(int year) const { return year >= first_year_ && year <= last_year_; }
    bool is_holiday(std::int64_t day) const { return days_.count(day) != 0; }
    Region region() const { return region_; }
    int first_year() const { return first_year_; }
    int last_year() const { return last_year_; }

    bool is_workday(std::int64_t day) const {
        const HourStamp ts(day * 24);
        check(ts);
        return ts.weekday() < 5 && !is_holiday(day);
    }

    void check(HourStamp ts) const {
        if (!covers(ts.year()))
            throw Error(ErrorCode::OutOfCalendarRange, ts.iso() + " outside calendar years " + std::to_string(first_year_) +
                                                           "-" + std::to_string(last_year_));
    }

private:
    Region region_ = Region::Custom;
    std::set<std::int64_t> days_;
    int first_year_ = 1;
    int last_year_ = 0;
};

inline FeatureVector encode_timestamp(HourStamp ts, const HolidayCalendar& cal) {
    cal.check(ts);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    FeatureVector f;
    const double hour = ts.hour_of_day();
    const double dow = ts.weekday();
    const double month = ts.month() - 1;
    f.hour_sin = std::sin(two_pi * hour / 24.0);
    f.hour_cos = std::cos(two_pi * hour / 24.0);
    f.dow_sin = std::sin(two_pi * dow / 7.0);
    f.dow_cos = std::cos(two_pi * dow / 7.0);
    f.month_sin = std::sin(two_pi * month / 12.0);
    f.month_cos = std::cos(two_pi * month / 12.0);
    const auto day = ts.day_index();
    f.is_holiday = cal.is_holiday(day) ? 1.0 : 0.0;
    f.is_workday = cal.is_workday(day) ? 1.0 : 0.0;
    f.next_day_workday = cal.is_workday(day + 1) ? 1.0 : 0.0;
    return f;
}

/// Row-major T x 9 feature matrix.
struct FeatureMatrix {
    std::vector<double> values;
    std::size_t rows = 0;

    const double* row(std::size_t t) const { return values.data() + t * kCalendarFeatures; }
};

inline FeatureMatrix build_feature_matrix(HourStamp start, std::size_t hours, const HolidayCalendar& cal) {
    FeatureMatrix m;
    m.rows = hours;
    m.values.reserve(hours * kCalendarFeatures);
    for (std::size_t t = 0; t < hours; ++t) {
        auto f = encode_timestamp(start + static_cast<std::int64_t>(t), cal).as_array();
        m.values.insert(m.values.end(), f.begin(), f.end());
    }
    return m;
}

inline FeatureMatrix build_feature_matrix(std::span<const HourStamp> stamps, const HolidayCalendar& cal) {
    FeatureMatrix m;
    m.rows = stamps.size();
    for (auto ts : stamps) {
        auto f = encode_timestamp(ts, cal).as_array();
        m.values.insert(m.values.end(), f.begin(), f.end());
    }
    return m;
}

inline FeatureMatrix build_feature_matrix(const HourlyDataset& ds, const HolidayCalendar& cal) {
    return build_feature_matrix(ds.start, ds.hours, cal);
}

} // namespace gridcast
