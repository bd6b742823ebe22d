#pragma once

#include "gridcast/dataset.hpp"
#include "gridcast/error.hpp"
#include "gridcast/models.hpp"
#include "gridcast/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace gridcast {

/// Pairwise (cascade) summation; error grows with log n instead of n.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 16) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Predictions and ground truth laid out [client][origin slot][step].
struct ForecastSet {
    std::size_t clients = 0;
    std::size_t origins = 0;
    std::size_t horizon = 0;
    std::size_t first_origin = 0;
    std::vector<double> predicted;
    std::vector<double> actual;

    static ForecastSet make(std::size_t clients, std::size_t origins, std::size_t horizon, std::size_t first_origin = 0) {
        ForecastSet fs{clients, origins, horizon, first_origin, {}, {}};
        fs.predicted.assign(clients * origins * horizon, 0.0);
        fs.actual.assign(clients * origins * horizon, 0.0);
        return fs;
    }

    std::size_t blocks() const { return clients * origins; }
    bool empty() const { return predicted.empty(); }
    std::size_t offset(std::size_t c, std::size_t slot) const { return (c * origins + slot) * horizon; }

    void add(std::size_t c, std::size_t slot, std::span<const double> pred, std::span<const double> truth) {
        std::copy(pred.begin(), pred.end(), predicted.begin() + static_cast<std::ptrdiff_t>(offset(c, slot)));
        std::copy(truth.begin(), truth.end(), actual.begin() + static_cast<std::ptrdiff_t>(offset(c, slot)));
    }
};

/// Streams forecast blocks into per-block error sums, so metrics can be computed without
/// holding every prediction. The final reduction order is fixed by (client, slot).
class MetricAccumulator {
public:
    MetricAccumulator(std::size_t clients, std::size_t origins, std::size_t horizon)
        : clients_(clients), origins_(origins), horizon_(horizon), abs_(clients * origins, 0.0), sq_(clients * origins, 0.0),
          filled_(clients * origins, 0) {}

    void add(std::size_t c, std::size_t slot, std::span<const double> pred, std::span<const double> truth) {
        if (pred.size() != horizon_ || truth.size() != horizon_) throw Error(ErrorCode::ShapeMismatch, "forecast block length");
        double a[1024], s[1024];
        std::vector<double> abuf, sbuf;
        double* pa = a;
        double* ps = s;
        if (horizon_ > 1024) {
            abuf.resize(horizon_);
            sbuf.resize(horizon_);
            pa = abuf.data();
            ps = sbuf.data();
        }
        for (std::size_t i = 0; i < horizon_; ++i) {
            const double e = truth[i] - pred[i];
            pa[i] = std::abs(e);
            ps[i] = e * e;
        }
        const std::size_t k = c * origins_ + slot;
        abs_[k] = pairwise_sum({pa, horizon_});
        sq_[k] = pairwise_sum({ps, horizon_});
        filled_[k] = 1;
    }

    std::size_t missing() const { return static_cast<std::size_t>(std::count(filled_.begin(), filled_.end(), 0)); }

    double mae() const { return reduce(abs_); }
    double mse() const { return reduce(sq_); }

private:
    double reduce(const std::vector<double>& sums) const {
        if (sums.empty() || horizon_ == 0) throw Error(ErrorCode::EmptyForecastSet, "no forecast blocks");
        if (missing()) throw Error(ErrorCode::EmptyForecastSet, std::to_string(missing()) + " forecast blocks were never filled");
        return pairwise_sum(sums) / static_cast<double>(sums.size() * horizon_);
    }

    std::size_t clients_, origins_, horizon_;
    std::vector<double> abs_, sq_;
    std::vector<char> filled_;
};

inline MetricAccumulator accumulate(const ForecastSet& fs) {
    if (fs.empty()) throw Error(ErrorCode::EmptyForecastSet, "forecast set is empty");
    MetricAccumulator acc(fs.clients, fs.origins, fs.horizon);
    for (std::size_t c = 0; c < fs.clients; ++c)
        for (std::size_t t = 0; t < fs.origins; ++t)
            acc.add(c, t, std::span(fs.predicted).subspan(fs.offset(c, t), fs.horizon),
                    std::span(fs.actual).subspan(fs.offset(c, t), fs.horizon));
    return acc;
}

/// Mean absolute error over all clients, origins and steps.
inline double mae(const ForecastSet& fs) { return accumulate(fs).mae(); }
inline double mse(const ForecastSet& fs) { return accumulate(fs).mse(); }

// ---------------------------------------------------------------------------------------------
// Rolling-origin forecasting over the test part. Sinks expose add(client, slot, pred, truth).
// ---------------------------------------------------------------------------------------------

namespace detail {

inline void truth_block(const SplitDataset& ds, std::size_t c, std::size_t t, std::size_t h, std::vector<double>& out) {
    out.resize(h);
    for (std::size_t i = 0; i < h; ++i) out[i] = ds.data.at(t + 1 + i, c);
}

} // namespace detail

template <class Sink>
void forecast_persistence(const SplitDataset& ds, std::size_t horizon, std::size_t lag, Sink& sink) {
    const OriginRange r = origin_range(StrategySpec{StrategyKind::Local, lag, horizon}, SplitPart::Test, ds);
    std::vector<double> truth;
    for (std::size_t c = 0; c < ds.data.clients(); ++c) {
        const auto series = ds.data.series(c);
        for (std::size_t t = r.first; t < r.end; ++t) {
            detail::truth_block(ds, c, t, horizon, truth);
            sink.add(c, t - r.first, persistence_forecast(series, t, horizon, lag), truth);
        }
    }
}

/// `models` holds one model per client (Local) or a single shared model (Global).
template <class Sink>
void forecast_linreg(std::span<const LinRegModel* const> models, const WindowSource& src, std::size_t horizon, Sink& sink) {
    const std::size_t C = src.data.data.clients();
    if (models.empty()) throw Error(ErrorCode::MissingClientModel, "no linear models");
    const StrategySpec spec{StrategyKind::Local, models[0]->lags(), horizon};
    const OriginRange r = origin_range(spec, SplitPart::Test, src.data);
    std::vector<double> truth;
    std::vector<SampleRef> refs;
    for (std::size_t c = 0; c < C; ++c) {
        const LinRegModel* m = models.size() == 1 ? models[0] : (c < models.size() ? models[c] : nullptr);
        if (!m) throw Error(ErrorCode::MissingClientModel, "client " + src.data.data.client_ids[c]);
        refs.clear();
        for (std::size_t t = r.first; t < r.end; ++t) refs.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(t)});
        for (std::size_t start = 0; start < refs.size(); start += 4096) {
            auto chunk = std::span<const SampleRef>(refs).subspan(start, std::min<std::size_t>(4096, refs.size() - start));
            const auto pred = m->predict(chunk, src);
            for (std::size_t k = 0; k < chunk.size(); ++k) {
                detail::truth_block(src.data, c, chunk[k].origin, horizon, truth);
                sink.add(c, chunk[k].origin - r.first, {pred.row(static_cast<Eigen::Index>(k)).data(), horizon}, truth);
            }
        }
    }
}

/// Multivariate: one pass per origin emits all C rows. Local: client c uses models[c].
/// Global: the single model is applied per (client, origin).
template <class Sink>
void forecast_neural(std::span<NeuralModel* const> models, const WindowSource& src, Sink& sink,
                     std::size_t batch_size = 256) {
    if (models.empty() || !models[0]) throw Error(ErrorCode::MissingClientModel, "no trained model");
    const StrategySpec spec = models[0]->spec().strategy;
    const std::size_t C = src.data.data.clients(), h = spec.horizon;
    const SampleSet test = enumerate_samples(spec, SplitPart::Test, src.data);
    const OriginRange r = origin_range(spec, SplitPart::Test, src.data);
    std::vector<double> pred(h), truth(h);
    for (std::size_t g = 0; g < test.groups.size(); ++g) {
        NeuralModel* model = spec.kind == StrategyKind::Local ? (g < models.size() ? models[g] : nullptr) : models[0];
        if (!model) throw Error(ErrorCode::MissingClientModel, "client " + src.data.data.client_ids[g]);
        const auto& refs = test.groups[g];
        for (std::size_t start = 0; start < refs.size(); start += batch_size) {
            auto chunk = std::span<const SampleRef>(refs).subspan(start, std::min(batch_size, refs.size() - start));
            const Batch b = make_batch(chunk, spec, src);
            const Tensor out = predict(*model, b);
            const std::size_t dout = spec.d_out(C);
            for (std::size_t k = 0; k < chunk.size(); ++k) {
                const std::size_t slot = chunk[k].origin - r.first;
                const std::size_t first_client = chunk[k].client == kAllClients ? 0 : chunk[k].client;
                for (std::size_t j = 0; j < dout; ++j) {
                    for (std::size_t i = 0; i < h; ++i) {
                        pred[i] = out[(k * h + i) * dout + j];
                        truth[i] = b.target[(k * h + i) * dout + j];
                    }
                    sink.add(first_client + j, slot, pred, truth);
                }
            }
        }
    }
}

/// Number of test origins for a lookback/horizon pair.
inline std::size_t test_origin_count(const SplitDataset& ds, std::size_t lookback, std::size_t horizon) {
    return origin_range(StrategySpec{StrategyKind::Local, lookback, horizon}, SplitPart::Test, ds).size();
}

// ---------------------------------------------------------------------------------------------
// Run results and tables
// ---------------------------------------------------------------------------------------------

struct RunResult {
    std::string dataset;
    std::string family;
    std::string strategy;
    std::size_t horizon = 0;
    double mae = 0.0;
    double mse = 0.0;
    double train_seconds = 0.0;
    std::string manifest;  // content hash of the run manifest
};

inline constexpr const char* kResultsHeader = "dataset,family,strategy,h,mae,mse,train_seconds,manifest";

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline void write_results_csv(const std::vector<RunResult>& runs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
    out << kResultsHeader << '\n';
    for (const auto& r : runs)
        out << r.dataset << ',' << r.family << ',' << r.strategy << ',' << r.horizon << ',' << format_double(r.mae) << ','
            << format_double(r.mse) << ',' << format_fixed(r.train_seconds, 3) << ',' << r.manifest << '\n';
}

inline std::vector<RunResult> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileNotFound, path.string());
    std::vector<RunResult> runs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line_no == 1) continue;
        const auto f = detail::split_fields(line, ',');
        if (f.size() != 8) throw Error(ErrorCode::MalformedRow, path.string() + " line " + std::to_string(line_no));
        RunResult r;
        r.dataset = f[0];
        r.family = f[1];
        r.strategy = f[2];
        r.horizon = std::stoul(std::string(f[3]));
        auto m1 = detail::parse_double(f[4]), m2 = detail::parse_double(f[5]), s = detail::parse_double(f[6]);
        if (!m1 || !m2 || !s) throw Error(ErrorCode::MalformedRow, path.string() + " line " + std::to_string(line_no));
        r.mae = *m1;
        r.mse = *m2;
        r.train_seconds = *s;
        r.manifest = f[7];
        runs.push_back(std::move(r));
    }
    return runs;
}

/// Published numbers for models this library does not implement.
struct ReferenceResult {
    std::string model;
    std::string strategy;  // MV, L or G
    std::string input_days;
    std::string dataset;
    std::size_t horizon = 0;
    double mae = 0.0;
    double mse = 0.0;
};

inline std::filesystem::path default_reference_file(const std::filesystem::path& data_dir) {
    return data_dir / "reference" / "v1" / "reference_results.csv";
}

/// Columns: model,strategy,input_days,dataset,h,mae,mse. Lines starting with '#' are comments.
inline std::vector<ReferenceResult> load_reference_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileNotFound, path.string());
    std::vector<ReferenceResult> out;
    std::string line;
    std::size_t line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        const auto f = detail::split_fields(line, ',');
        auto m1 = f.size() == 7 ? detail::parse_double(f[5]) : std::nullopt;
        auto m2 = f.size() == 7 ? detail::parse_double(f[6]) : std::nullopt;
        if (!m1 || !m2) throw Error(ErrorCode::MalformedRow, path.string() + " line " + std::to_string(line_no));
        out.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2]), std::string(f[3]),
                       std::stoul(std::string(f[4])), *m1, *m2});
    }
    return out;
}

enum class MetricKind { MAE, MSE };

/// Value rounded to 3 decimals, ties to even.
inline double round3(double v) { return std::nearbyint(v * 1000.0) / 1000.0; }

struct ResultsTable {
    struct Row {
        std::string model;
        std::string strategy;  // MV, L, G
        std::string input_days;
        std::vector<std::optional<double>> cells;
    };
    std::vector<std::pair<std::string, std::size_t>> columns;  // (dataset, h)
    std::vector<Row> rows;

    std::string markdown() const;
    std::string csv() const;
};

namespace detail {

inline int strategy_rank(std::string_view s) { return s == "MV" ? 0 : s == "L" ? 1 : s == "G" ? 2 : 3; }

inline std::string strategy_short(std::string_view s) {
    try {
        return short_name(strategy_from_string(s));
    } catch (const Error&) {
        return std::string(s);
    }
}

inline std::string family_display(std::string_view s) {
    auto f = family_from_string(s);
    return f ? display_name(*f) : std::string(s);
}

} // namespace detail

/// Groups runs into strategy blocks with one column per dataset x horizon. Reference rows lead
/// each block, followed by local runs in family order.
inline ResultsTable results_table(const std::vector<RunResult>& runs, MetricKind metric,
                                  const std::vector<ReferenceResult>& references = {},
                                  const std::function<std::string(const RunResult&)>& input_days = {}) {
    ResultsTable table;
    std::vector<std::string> datasets;
    std::set<std::size_t> horizons;
    auto note_dataset = [&](const std::string& d) {
        if (std::find(datasets.begin(), datasets.end(), d) == datasets.end()) datasets.push_back(d);
    };
    for (const auto& r : runs) note_dataset(r.dataset), horizons.insert(r.horizon);
    // Reference rows only fill columns that local runs also report.
    for (const auto& d : datasets)
        for (auto h : horizons) table.columns.emplace_back(d, h);
    auto column_of = [&](const std::string& d, std::size_t h) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < table.columns.size(); ++i)
            if (table.columns[i].first == d && table.columns[i].second == h) return i;
        return std::nullopt;
    };

    struct Key {
        int strategy;
        int origin;  // 0 reference, 1 run
        int family;
        std::string model;
        std::string days;
        bool operator<(const Key& o) const {
            return std::tie(strategy, origin, family, model, days) < std::tie(o.strategy, o.origin, o.family, o.model, o.days);
        }
    };
    std::map<Key, ResultsTable::Row> rows;
    auto row_for = [&](Key key, const std::string& model, const std::string& strat, const std::string& days) -> ResultsTable::Row& {
        auto [it, inserted] = rows.try_emplace(key);
        if (inserted) it->second = {model, strat, days, std::vector<std::optional<double>>(table.columns.size())};
        return it->second;
    };
    for (const auto& ref : references) {
        auto col = column_of(ref.dataset, ref.horizon);
        if (!col) continue;
        auto& row = row_for({detail::strategy_rank(ref.strategy), 0, 0, ref.model, ref.input_days}, ref.model, ref.strategy, ref.input_days);
        row.cells[*col] = metric == MetricKind::MAE ? ref.mae : ref.mse;
    }
    for (const auto& r : runs) {
        const std::string strat = detail::strategy_short(r.strategy);
        const auto fam = family_from_string(r.family);
        const int fam_rank = fam ? static_cast<int>(*fam) : 99;
        const std::string days = fam == Family::Persistence ? "-" : input_days ? input_days(r) : std::string("7");
        auto& row = row_for({detail::strategy_rank(strat), 1, fam_rank, r.family, days}, detail::family_display(r.family), strat, days);
        row.cells[*column_of(r.dataset, r.horizon)] = metric == MetricKind::MAE ? r.mae : r.mse;
    }
    for (auto& [k, row] : rows) table.rows.push_back(std::move(row));
    return table;
}

inline std::string ResultsTable::markdown() const {
    const std::size_t ncol = columns.size();
    std::vector<std::optional<double>> global_best(ncol);
    std::map<std::string, std::vector<std::optional<double>>> group_best;
    auto better = [](std::optional<double>& best, double v) {
        if (!best || v < *best) best = v;
    };
    for (const auto& row : rows) {
        auto& gb = group_best.try_emplace(row.strategy, ncol).first->second;
        for (std::size_t i = 0; i < ncol; ++i)
            if (row.cells[i]) {
                better(global_best[i], round3(*row.cells[i]));
                better(gb[i], round3(*row.cells[i]));
            }
    }
    std::ostringstream out;
    out << "| Strategy | Model | Input (days) |";
    for (const auto& [d, h] : columns) out << ' ' << d << " h=" << h << " |";
    out << "\n|---|---|---|";
    for (std::size_t i = 0; i < ncol; ++i) out << "---:|";
    out << '\n';
    for (const auto& row : rows) {
        out << "| " << row.strategy << " | " << row.model << " | " << row.input_days << " |";
        for (std::size_t i = 0; i < ncol; ++i) {
            if (!row.cells[i]) {
                out << " - |";
                continue;
            }
            const double v = round3(*row.cells[i]);
            const std::string text = format_fixed(v, 3);
            if (v == *global_best[i])
                out << " **" << text << "** |";
            else if (v == *group_best.at(row.strategy)[i])
                out << " *" << text << "* |";
            else
                out << ' ' << text << " |";
        }
        out << '\n';
    }
    return out.str();
}

inline std::string ResultsTable::csv() const {
    std::ostringstream out;
    out << "strategy,model,input_days";
    for (const auto& [d, h] : columns) out << ',' << d << "_h" << h;
    out << '\n';
    for (const auto& row : rows) {
        out << row.strategy << ',' << row.model << ',' << row.input_days;
        for (const auto& c : row.cells) out << ',' << (c ? format_fixed(*c, 3) : std::string());
        out << '\n';
    }
    return out.str();
}

} // namespace gridcast
