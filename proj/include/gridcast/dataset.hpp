#pragma once

#include "gridcast/error.hpp"
#include "gridcast/timeutil.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridcast {

enum class SourceFormat { WideCsv, AusgridLong };
enum class Region { Portugal, NewSouthWales, Custom };

inline const char* to_string(Region r) {
    switch (r) {
    case Region::Portugal: return "portugal";
    case Region::NewSouthWales: return "new_south_wales";
    case Region::Custom: return "custom";
    }
    return "custom";
}

inline Region region_from_string(std::string_view s) {
    if (s == "portugal" || s == "pt") return Region::Portugal;
    if (s == "new_south_wales" || s == "nsw") return Region::NewSouthWales;
    if (s == "custom" || s.empty()) return Region::Custom;
    throw Error(ErrorCode::InvalidArgument, "unknown region '" + std::string(s) + "'");
}

/// Records of one client at native resolution. Times are minutes since epoch.
struct RawSeries {
    std::string client_id;
    std::vector<std::int64_t> minutes;
    std::vector<double> loads;
};

struct ExcludedClient {
    std::string client_id;
    std::string reason;
};

struct RawDataset {
    SourceFormat source_format = SourceFormat::WideCsv;
    std::vector<RawSeries> series;
    /// Clients with unparsable, missing or gapped records. They stay in `series`; resampling drops them.
    std::vector<ExcludedClient> incomplete;

    std::size_t row_count() const {
        std::size_t n = 0;
        for (const auto& s : series) n += s.loads.size();
        return n;
    }
};

/// Aligned hourly load matrix, row-major T x C.
struct HourlyDataset {
    std::vector<double> values;
    HourStamp start;
    std::size_t hours = 0;
    std::vector<std::string> client_ids;
    Region region = Region::Custom;
    std::vector<ExcludedClient> dropped;

    std::size_t clients() const { return client_ids.size(); }
    HourStamp timestamp(std::size_t t) const { return start + static_cast<std::int64_t>(t); }
    double at(std::size_t t, std::size_t c) const { return values[t * clients() + c]; }
    double& at(std::size_t t, std::size_t c) { return values[t * clients() + c]; }

    std::vector<double> series(std::size_t c) const {
        std::vector<double> out(hours);
        for (std::size_t t = 0; t < hours; ++t) out[t] = at(t, c);
        return out;
    }
};

/// Temporal 70/10/20 partition: train [0, train_end), val [train_end, val_end), test [val_end, T).
struct SplitDataset {
    HourlyDataset data;
    std::size_t train_end = 0;
    std::size_t val_end = 0;

    std::size_t train_size() const { return train_end; }
    std::size_t val_size() const { return val_end - train_end; }
    std::size_t test_size() const { return data.hours - val_end; }
};

struct ScalerParams {
    std::vector<double> mean;
    std::vector<double> std;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        auto next = line.find(delim, pos);
        auto field = line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
        while (!field.empty() && (field.front() == ' ' || field.front() == '"')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '"' || field.back() == '\r'))
            field.remove_suffix(1);
        out.push_back(field);
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s, bool decimal_comma = false) {
    if (s.empty()) return std::nullopt;
    std::string buf;
    if (decimal_comma && s.find(',') != std::string_view::npos) {
        buf.assign(s);
        std::replace(buf.begin(), buf.end(), ',', '.');
        s = buf;
    }
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::ifstream open_or_throw(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::FileNotFound, path.string());
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileNotFound, path.string());
    return in;
}

inline void note_incomplete(RawDataset& ds, std::set<std::string>& seen, const std::string& id, std::string reason) {
    if (seen.insert(id).second) ds.incomplete.push_back({id, std::move(reason)});
}

inline RawDataset load_wide(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    RawDataset ds;
    ds.source_format = SourceFormat::WideCsv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) break;
    }
    if (line.empty()) throw Error(ErrorCode::EmptyDataset, path.string() + " has no header");
    const char delim = line.find(';') != std::string::npos ? ';' : ',';
    const bool decimal_comma = delim == ';';
    auto header = split_fields(line, delim);
    if (header.size() < 2) throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": header needs a timestamp and at least one client");
    for (std::size_t i = 1; i < header.size(); ++i) ds.series.push_back(RawSeries{std::string(header[i]), {}, {}});
    std::set<std::string> flagged;
    std::optional<std::int64_t> previous;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line, delim);
        if (fields.size() != header.size())
            throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                                     std::to_string(header.size()) + " fields, got " +
                                                     std::to_string(fields.size()));
        auto ts = parse_timestamp(fields[0]);
        if (!ts) throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": bad timestamp '" + std::string(fields[0]) + "'");
        if (previous && *ts <= *previous)
            throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": timestamps must be strictly increasing");
        previous = ts;
        for (std::size_t c = 1; c < fields.size(); ++c) {
            auto& s = ds.series[c - 1];
            auto v = parse_double(fields[c], decimal_comma);
            if (!v) {
                note_incomplete(ds, flagged, s.client_id, "missing or unparsable value at line " + std::to_string(line_no));
                continue;
            }
            s.minutes.push_back(*ts);
            s.loads.push_back(*v);
        }
    }
    if (ds.row_count() == 0 && ds.incomplete.empty()) throw Error(ErrorCode::EmptyDataset, path.string());
    return ds;
}

inline RawDataset load_ausgrid(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    RawDataset ds;
    ds.source_format = SourceFormat::AusgridLong;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string_view> header;
    std::string header_line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.rfind("Customer", 0) == 0) {
            header_line = line;
            header = split_fields(header_line, ',');
            break;
        }
    }
    if (header.empty()) throw Error(ErrorCode::EmptyDataset, path.string() + " has no 'Customer' header row");
    std::optional<std::size_t> col_customer, col_category, col_date, col_first_slot;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "Customer") col_customer = i;
        else if (header[i] == "Consumption Category") col_category = i;
        else if (header[i] == "date" || header[i] == "Date") col_date = i;
        else if (!col_first_slot && parse_clock(header[i])) col_first_slot = i;
    }
    if (!col_customer || !col_category || !col_date || !col_first_slot || *col_first_slot + 48 > header.size())
        throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": unrecognised Ausgrid header");

    std::map<std::string, std::size_t> index;
    std::set<std::string> flagged;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line, ',');
        if (fields.size() < *col_first_slot + 48)
            throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected at least " +
                                                     std::to_string(*col_first_slot + 48) + " fields");
        if (fields[*col_category] != "GC") continue;
        auto day = parse_date(fields[*col_date]);
        if (!day) throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": bad date '" + std::string(fields[*col_date]) + "'");
        std::string id(fields[*col_customer]);
        auto [it, inserted] = index.try_emplace(id, ds.series.size());
        if (inserted) ds.series.push_back(RawSeries{id, {}, {}});
        auto& s = ds.series[it->second];
        // Slot k holds the energy of [k*30min, (k+1)*30min) on that day.
        for (std::size_t k = 0; k < 48; ++k) {
            auto v = parse_double(fields[*col_first_slot + k]);
            if (!v) {
                note_incomplete(ds, flagged, id, "missing or unparsable value at line " + std::to_string(line_no));
                continue;
            }
            s.minutes.push_back(*day * 1440 + static_cast<std::int64_t>(k) * 30);
            s.loads.push_back(*v);
        }
    }
    if (ds.row_count() == 0) throw Error(ErrorCode::EmptyDataset, path.string() + " has no general-consumption rows");
    for (auto& s : ds.series) {
        std::vector<std::size_t> order(s.minutes.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.minutes[a] < s.minutes[b]; });
        RawSeries sorted{s.client_id, {}, {}};
        for (auto i : order) {
            if (!sorted.minutes.empty() && sorted.minutes.back() == s.minutes[i]) {
                note_incomplete(ds, flagged, s.client_id, "duplicate record");
                continue;
            }
            sorted.minutes.push_back(s.minutes[i]);
            sorted.loads.push_back(s.loads[i]);
        }
        s = std::move(sorted);
    }
    return ds;
}

// Native step of a series: the smallest spacing between records.
inline std::int64_t native_step(const RawSeries& s) {
    std::int64_t step = 0;
    for (std::size_t i = 1; i < s.minutes.size(); ++i) {
        auto d = s.minutes[i] - s.minutes[i - 1];
        if (d > 0 && (step == 0 || d < step)) step = d;
    }
    return step;
}

inline void flag_gaps(RawDataset& ds) {
    std::set<std::string> seen;
    for (const auto& e : ds.incomplete) seen.insert(e.client_id);
    for (const auto& s : ds.series) {
        auto step = native_step(s);
        if (step == 0) continue;
        for (std::size_t i = 1; i < s.minutes.size(); ++i) {
            auto d = s.minutes[i] - s.minutes[i - 1];
            if (d > step && d % step == 0) {
                note_incomplete(ds, seen, s.client_id, "gap after minute " + std::to_string(s.minutes[i - 1]));
                break;
            }
        }
    }
}

} // namespace detail

/// Reads a raw multi-client CSV. Records that parse are returned; clients with missing,
/// unparsable or gapped records are listed in `incomplete`.
inline RawDataset load_raw_csv(const std::filesystem::path& path, SourceFormat format) {
    RawDataset ds = format == SourceFormat::WideCsv ? detail::load_wide(path) : detail::load_ausgrid(path);
    detail::flag_gaps(ds);
    return ds;
}

/// Headerless numeric matrix with one row per hour from `start` and one column per client, as in
/// the commonly mirrored electricity.txt. Clients are named "c<column>".
inline RawDataset load_matrix_csv(const std::filesystem::path& path, HourStamp start) {
    auto in = detail::open_or_throw(path);
    RawDataset ds;
    ds.source_format = SourceFormat::WideCsv;
    std::set<std::string> flagged;
    std::string line;
    std::size_t line_no = 0, row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_fields(line, ',');
        if (ds.series.empty())
            for (std::size_t c = 0; c < fields.size(); ++c) ds.series.push_back(RawSeries{"c" + std::to_string(c), {}, {}});
        if (fields.size() != ds.series.size())
            throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected " + std::to_string(ds.series.size()) +
                                                     " fields, got " + std::to_string(fields.size()));
        const std::int64_t minute = (start.hours() + static_cast<std::int64_t>(row)) * 60;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            auto& s = ds.series[c];
            auto v = detail::parse_double(fields[c]);
            if (!v) {
                detail::note_incomplete(ds, flagged, s.client_id, "missing or unparsable value at line " + std::to_string(line_no));
                continue;
            }
            s.minutes.push_back(minute);
            s.loads.push_back(*v);
        }
        ++row;
    }
    if (ds.row_count() == 0 && ds.incomplete.empty()) throw Error(ErrorCode::EmptyDataset, path.string());
    detail::flag_gaps(ds);
    return ds;
}

/// Concatenates sources that hold consecutive periods of the same clients (the Ausgrid data
/// ships one file per year). Duplicate timestamps mark the client incomplete.
inline RawDataset merge_raw(std::vector<RawDataset> parts) {
    if (parts.empty()) throw Error(ErrorCode::EmptyDataset, "no sources to merge");
    if (parts.size() == 1) return std::move(parts.front());
    RawDataset out;
    out.source_format = parts.front().source_format;
    std::map<std::string, std::size_t> index;
    std::set<std::string> flagged;
    for (auto& part : parts) {
        for (auto& e : part.incomplete) detail::note_incomplete(out, flagged, e.client_id, std::move(e.reason));
        for (auto& s : part.series) {
            auto [it, inserted] = index.try_emplace(s.client_id, out.series.size());
            if (inserted) out.series.push_back(RawSeries{s.client_id, {}, {}});
            auto& dst = out.series[it->second];
            dst.minutes.insert(dst.minutes.end(), s.minutes.begin(), s.minutes.end());
            dst.loads.insert(dst.loads.end(), s.loads.begin(), s.loads.end());
        }
    }
    for (auto& s : out.series) {
        std::vector<std::size_t> order(s.minutes.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.minutes[a] < s.minutes[b]; });
        RawSeries sorted{s.client_id, {}, {}};
        for (auto i : order) {
            if (!sorted.minutes.empty() && sorted.minutes.back() == s.minutes[i]) {
                detail::note_incomplete(out, flagged, s.client_id, "duplicate record across sources");
                continue;
            }
            sorted.minutes.push_back(s.minutes[i]);
            sorted.loads.push_back(s.loads[i]);
        }
        s = std::move(sorted);
    }
    detail::flag_gaps(out);
    return out;
}

/// Sums sub-hourly records into the hour beginning at each timestamp, aligns clients on the
/// intersection of their ranges and drops clients with gaps.
inline HourlyDataset resample_hourly(const RawDataset& raw, Region region = Region::Custom) {
    struct Hourly {
        std::string id;
        std::int64_t first = 0;
        std::vector<double> values;
        std::vector<bool> present;
    };
    HourlyDataset out;
    out.region = region;
    std::set<std::string> excluded;
    for (const auto& e : raw.incomplete) {
        excluded.insert(e.client_id);
        out.dropped.push_back(e);
    }
    std::vector<Hourly> kept;
    for (const auto& s : raw.series) {
        if (excluded.count(s.client_id)) continue;
        if (s.minutes.empty()) {
            out.dropped.push_back({s.client_id, "no records"});
            continue;
        }
        const std::int64_t step = s.minutes.size() > 1 ? detail::native_step(s) : 60;
        if (step <= 0 || 60 % step != 0)
            throw Error(ErrorCode::InconsistentResolution, "client " + s.client_id + " has native step of " + std::to_string(step) + " minutes");
        for (std::size_t i = 0; i < s.minutes.size(); ++i) {
            if (i > 0 && (s.minutes[i] - s.minutes[i - 1]) % step != 0)
                throw Error(ErrorCode::InconsistentResolution, "client " + s.client_id + " mixes record spacings");
            if ((s.minutes[i] - s.minutes[0]) % step != 0 || s.minutes[i] % step != 0)
                throw Error(ErrorCode::InconsistentResolution, "client " + s.client_id + " has misaligned records");
        }
        const std::int64_t per_hour = 60 / step;
        auto floor_hour = [](std::int64_t m) { return m >= 0 ? m / 60 : -((-m + 59) / 60); };
        const std::int64_t h0 = floor_hour(s.minutes.front());
        const std::int64_t h1 = floor_hour(s.minutes.back());
        Hourly hs{s.client_id, h0, std::vector<double>(static_cast<std::size_t>(h1 - h0 + 1), 0.0), {}};
        std::vector<std::int64_t> counts(hs.values.size(), 0);
        for (std::size_t i = 0; i < s.minutes.size(); ++i) {
            auto k = static_cast<std::size_t>(floor_hour(s.minutes[i]) - h0);
            hs.values[k] += s.loads[i];
            ++counts[k];
        }
        hs.present.resize(hs.values.size());
        for (std::size_t k = 0; k < counts.size(); ++k) hs.present[k] = counts[k] == per_hour;
        kept.push_back(std::move(hs));
    }
    if (kept.empty()) throw Error(ErrorCode::EmptyDataset, "no complete clients");

    // Partial hours at either end of a series are trimmed before intersecting ranges.
    std::int64_t lo = std::numeric_limits<std::int64_t>::min(), hi = std::numeric_limits<std::int64_t>::max();
    for (const auto& hs : kept) {
        std::size_t a = 0, b = hs.values.size();
        while (a < b && !hs.present[a]) ++a;
        while (b > a && !hs.present[b - 1]) --b;
        if (a == b) throw Error(ErrorCode::NoCommonTimeRange, "client " + hs.id + " has no complete hour");
        lo = std::max(lo, hs.first + static_cast<std::int64_t>(a));
        hi = std::min(hi, hs.first + static_cast<std::int64_t>(b) - 1);
    }
    if (lo > hi) throw Error(ErrorCode::NoCommonTimeRange, "client time ranges do not overlap");

    std::vector<const Hourly*> complete;
    for (const auto& hs : kept) {
        bool ok = true;
        for (std::int64_t h = lo; h <= hi && ok; ++h) ok = hs.present[static_cast<std::size_t>(h - hs.first)];
        if (ok) complete.push_back(&hs);
        else out.dropped.push_back({hs.id, "gap after alignment"});
    }
    if (complete.empty()) throw Error(ErrorCode::EmptyDataset, "every client has gaps in the common range");
    out.start = HourStamp(lo);
    out.hours = static_cast<std::size_t>(hi - lo + 1);
    if (out.hours < 24) throw Error(ErrorCode::TooShort, "common range is " + std::to_string(out.hours) + " hours, need at least 24");
    for (const auto* hs : complete) out.client_ids.push_back(hs->id);
    const std::size_t C = complete.size();
    out.values.resize(out.hours * C);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < out.hours; ++t)
            out.values[t * C + c] = complete[c]->values[static_cast<std::size_t>(lo - complete[c]->first) + t];
    return out;
}

/// floor(0.7 T) / floor(0.1 T) / remainder.
inline SplitDataset split_dataset(HourlyDataset ds) {
    const std::size_t T = ds.hours;
    if (T < 10) throw Error(ErrorCode::TooShort, "need at least 10 hours to split, got " + std::to_string(T));
    SplitDataset s;
    s.train_end = T * 7 / 10;
    s.val_end = s.train_end + T / 10;
    s.data = std::move(ds);
    return s;
}

/// Per-client mean and population standard deviation over the train range.
inline ScalerParams fit_standardizer(const SplitDataset& ds) {
    const std::size_t C = ds.data.clients(), n = ds.train_end;
    if (n == 0) throw Error(ErrorCode::TooShort, "empty train range");
    ScalerParams p{std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
    for (std::size_t c = 0; c < C; ++c) {
        double m = 0.0;
        for (std::size_t t = 0; t < n; ++t) m += ds.data.at(t, c);
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t t = 0; t < n; ++t) v += (ds.data.at(t, c) - m) * (ds.data.at(t, c) - m);
        v /= static_cast<double>(n);
        const double sd = std::sqrt(v);
        if (!(sd > 0.0)) throw Error(ErrorCode::ConstantSeries, ds.data.client_ids[c]);
        p.mean[c] = m;
        p.std[c] = sd;
    }
    return p;
}

inline HourlyDataset apply_standardizer(const HourlyDataset& ds, const ScalerParams& p) {
    if (p.mean.size() != ds.clients()) throw Error(ErrorCode::ShapeMismatch, "scaler fitted for a different client count");
    HourlyDataset out = ds;
    const std::size_t C = ds.clients();
    for (std::size_t t = 0; t < ds.hours; ++t)
        for (std::size_t c = 0; c < C; ++c) out.values[t * C + c] = (ds.values[t * C + c] - p.mean[c]) / p.std[c];
    return out;
}

inline HourlyDataset invert_standardizer(const HourlyDataset& ds, const ScalerParams& p) {
    HourlyDataset out = ds;
    const std::size_t C = ds.clients();
    for (std::size_t t = 0; t < ds.hours; ++t)
        for (std::size_t c = 0; c < C; ++c) out.values[t * C + c] = ds.values[t * C + c] * p.std[c] + p.mean[c];
    return out;
}

inline SplitDataset apply_standardizer(const SplitDataset& ds, const ScalerParams& p) {
    return SplitDataset{apply_standardizer(ds.data, p), ds.train_end, ds.val_end};
}

// ---------------------------------------------------------------------------------------------
// Canonical exchange format and content hashes
// ---------------------------------------------------------------------------------------------

inline std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 14695981039346656037ull) {
    for (auto b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull) {
    return fnv1a(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()), h);
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string dataset_hash(const HourlyDataset& ds) {
    std::uint64_t h = fnv1a(std::to_string(ds.start.hours()) + ":" + std::to_string(ds.hours));
    for (const auto& id : ds.client_ids) h = fnv1a(id + ",", h);
    h = fnv1a(std::span(reinterpret_cast<const unsigned char*>(ds.values.data()), ds.values.size() * sizeof(double)), h);
    return hex64(h);
}

inline std::string scaler_hash(const ScalerParams& p) {
    std::uint64_t h = fnv1a(std::span(reinterpret_cast<const unsigned char*>(p.mean.data()), p.mean.size() * sizeof(double)));
    h = fnv1a(std::span(reinterpret_cast<const unsigned char*>(p.std.data()), p.std.size() * sizeof(double)), h);
    return hex64(h);
}

inline std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

/// Wide CSV: "timestamp,<client ids>" then one ISO-8601 hourly row per timestamp. Values use
/// shortest round-trip formatting.
inline void write_wide_csv(const HourlyDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
    out << "timestamp";
    for (const auto& id : ds.client_ids) out << ',' << id;
    out << '\n';
    for (std::size_t t = 0; t < ds.hours; ++t) {
        out << ds.timestamp(t).iso();
        for (std::size_t c = 0; c < ds.clients(); ++c) out << ',' << format_double(ds.at(t, c));
        out << '\n';
    }
}

/// Loads a wide CSV that is already hourly and complete.
inline HourlyDataset load_hourly_csv(const std::filesystem::path& path, Region region) {
    return resample_hourly(load_raw_csv(path, SourceFormat::WideCsv), region);
}

} // namespace gridcast
