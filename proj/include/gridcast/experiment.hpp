#pragma once

#include "gridcast/calendar.hpp"
#include "gridcast/dataset.hpp"
#include "gridcast/error.hpp"
#include "gridcast/evaluation.hpp"
#include "gridcast/models.hpp"
#include "gridcast/optim.hpp"
#include "gridcast/training.hpp"
#include "gridcast/windowing.hpp"

#include <json.hpp>

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef GRIDCAST_VERSION
#define GRIDCAST_VERSION "0.0.0"
#endif
#ifndef GRIDCAST_RESOURCE_DIR
#define GRIDCAST_RESOURCE_DIR "data"
#endif

namespace gridcast {

inline std::string code_version() { return GRIDCAST_VERSION; }
inline std::string code_hash() { return hex64(fnv1a(std::string("gridcast ") + GRIDCAST_VERSION)); }
inline std::filesystem::path resource_dir() { return GRIDCAST_RESOURCE_DIR; }

// ---------------------------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------------------------

/// One `key = value` entry with the line it came from (0 for JSON input).
struct ConfigEntry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

using ConfigSections = std::map<std::string, std::vector<ConfigEntry>>;

[[noreturn]] inline void config_error(const ConfigEntry& e, const std::string& section, const std::string& what) {
    std::string where = e.line ? "line " + std::to_string(e.line) + ": " : std::string();
    throw Error(ErrorCode::ConfigParse, where + "field '" + section + "." + e.key + "': " + what);
}

namespace detail {

inline std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    for (auto f : gridcast::detail::split_fields(s, ',')) {
        auto t = trim(f);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

inline ConfigSections parse_ini(const std::string& text) {
    ConfigSections out;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3)
                throw Error(ErrorCode::ConfigParse, "line " + std::to_string(line_no) + ": malformed section header");
            section = trim(std::string_view(t).substr(1, t.size() - 2));
            out[section];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::ConfigParse, "line " + std::to_string(line_no) + ": expected 'key = value'");
        if (section.empty())
            throw Error(ErrorCode::ConfigParse, "line " + std::to_string(line_no) + ": entry outside a section");
        ConfigEntry e{trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)), line_no};
        if (e.key.empty()) throw Error(ErrorCode::ConfigParse, "line " + std::to_string(line_no) + ": empty key");
        out[section].push_back(std::move(e));
    }
    return out;
}

inline std::string json_scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ",") + json_scalar(x);
        return s;
    }
    return v.dump();
}

inline ConfigSections parse_json_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ConfigParse, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ConfigParse, "JSON config must be an object of sections");
    ConfigSections out;
    for (const auto& [section, body] : j.items()) {
        if (!body.is_object()) throw Error(ErrorCode::ConfigParse, "section '" + section + "' must be an object");
        auto& entries = out[section];
        for (const auto& [k, v] : body.items()) entries.push_back({k, json_scalar(v), 0});
    }
    return out;
}

template <class T>
T parse_number(const ConfigEntry& e, const std::string& section) {
    T v{};
    const auto* b = e.value.data();
    const auto* end = b + e.value.size();
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec != std::errc{} || p != end) config_error(e, section, "expected a number, got '" + e.value + "'");
    return v;
}

inline bool parse_bool(const ConfigEntry& e, const std::string& section) {
    if (e.value == "true" || e.value == "1" || e.value == "yes" || e.value == "on") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no" || e.value == "off") return false;
    config_error(e, section, "expected true or false, got '" + e.value + "'");
}

inline Family parse_family(const std::string& s, const ConfigEntry& e, const std::string& section) {
    auto f = family_from_string(s);
    if (!f) config_error(e, section, "unknown family '" + s + "'");
    return *f;
}

inline StrategyKind parse_strategy(const std::string& s, const ConfigEntry& e, const std::string& section) {
    try {
        return strategy_from_string(s);
    } catch (const Error&) {
        config_error(e, section, "unknown strategy '" + s + "'");
    }
}

} // namespace detail

/// Applies one [train] entry. Returns false for unknown keys.
inline bool apply_train_entry(TrainConfig& cfg, const ConfigEntry& e, const std::string& section) {
    using detail::parse_number;
    if (e.key == "batch_size") cfg.batch_size = parse_number<std::size_t>(e, section);
    else if (e.key == "base_lr") cfg.base_lr = parse_number<double>(e, section);
    else if (e.key == "warmup_steps") cfg.warmup_steps = parse_number<std::size_t>(e, section);
    else if (e.key == "decay_gamma") cfg.decay_gamma = parse_number<double>(e, section);
    else if (e.key == "schedule") {
        try {
            cfg.schedule = schedule_from_string(e.value);
        } catch (const Error&) {
            config_error(e, section, "unknown schedule '" + e.value + "'");
        }
    } else if (e.key == "eval_interval") cfg.eval_interval_steps = parse_number<std::size_t>(e, section);
    else if (e.key == "patience") cfg.patience_evals = parse_number<std::size_t>(e, section);
    else if (e.key == "max_epochs") cfg.max_epochs = parse_number<std::size_t>(e, section);
    else if (e.key == "max_steps") cfg.max_steps = parse_number<std::size_t>(e, section);
    else if (e.key == "weight_decay") cfg.weight_decay = parse_number<double>(e, section);
    else if (e.key == "clip_norm") cfg.clip_norm = parse_number<double>(e, section);
    else if (e.key == "segregate_clients") cfg.segregate_clients = detail::parse_bool(e, section);
    else if (e.key == "eval_batch_size") cfg.eval_batch_size = parse_number<std::size_t>(e, section);
    else if (e.key == "max_val_samples") cfg.max_val_samples = parse_number<std::size_t>(e, section);
    else return false;
    if (cfg.batch_size == 0) config_error(e, section, "must be >= 1");
    return true;
}

inline bool apply_model_entry(ModelSpec& s, const ConfigEntry& e, const std::string& section) {
    using detail::parse_number;
    if (e.key == "d_model") s.d_model = parse_number<std::size_t>(e, section);
    else if (e.key == "layers") s.layers = parse_number<std::size_t>(e, section);
    else if (e.key == "heads") s.heads = parse_number<std::size_t>(e, section);
    else if (e.key == "ff_dim") s.ff_dim = parse_number<std::size_t>(e, section);
    else if (e.key == "dropout") s.dropout = parse_number<double>(e, section);
    else if (e.key == "causal_decoder") s.causal_decoder = detail::parse_bool(e, section);
    else if (e.key == "positional") {
        try {
            s.positional = positional_from_string(e.value);
        } catch (const Error&) {
            config_error(e, section, "unknown positional encoding '" + e.value + "'");
        }
    } else if (e.key == "mlp_hidden") s.mlp_hidden = parse_number<std::size_t>(e, section);
    else if (e.key == "mlp_lags") s.mlp_lags = parse_number<std::size_t>(e, section);
    else if (e.key == "lstm_units") s.lstm_units = parse_number<std::size_t>(e, section);
    else if (e.key == "lstm_layers") s.lstm_layers = parse_number<std::size_t>(e, section);
    else if (e.key == "linreg_lags") s.linreg_lags = parse_number<std::size_t>(e, section);
    else if (e.key == "ridge") s.ridge = parse_number<double>(e, section);
    else if (e.key == "persistence_lag") s.persistence_lag = parse_number<std::size_t>(e, section);
    else return false;
    return true;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"batch_size", c.batch_size},     {"base_lr", c.base_lr},
            {"warmup_steps", c.warmup_steps}, {"decay_gamma", c.decay_gamma},
            {"schedule", to_string(c.schedule)}, {"eval_interval", c.eval_interval_steps},
            {"patience", c.patience_evals},   {"max_epochs", c.max_epochs},
            {"max_steps", c.max_steps},       {"seed", c.seed},
            {"weight_decay", c.weight_decay}, {"clip_norm", c.clip_norm},
            {"segregate_clients", c.segregate_clients}, {"eval_batch_size", c.eval_batch_size},
            {"max_val_samples", c.max_val_samples}};
}

inline bool supports(Family f, StrategyKind s) {
    switch (f) {
    case Family::Persistence: return s == StrategyKind::Local;
    case Family::LinReg:
    case Family::Mlp: return s != StrategyKind::Multivariate;
    case Family::Lstm:
    case Family::Transformer: return true;
    }
    return false;
}

struct DatasetConfig {
    std::string id = "dataset";
    /// One or more files holding consecutive periods of the same clients.
    std::vector<std::filesystem::path> paths;
    SourceFormat format = SourceFormat::WideCsv;
    /// Set for headerless matrices: the timestamp of the first row.
    std::optional<HourStamp> matrix_start;
    Region region = Region::Custom;
    std::optional<std::filesystem::path> holiday_file;
    /// Keep only the first N clients; 0 keeps all.
    std::size_t max_clients = 0;
};

/// One (family, strategy, horizon) tuple of an experiment.
struct RunSpec {
    Family family = Family::Persistence;
    StrategyKind strategy = StrategyKind::Local;
    std::size_t horizon = 24;
    std::size_t lookback = 168;

    std::string id(const std::string& dataset) const {
        return dataset + "-" + to_string(family) + "-" + to_string(strategy) + "-h" + std::to_string(horizon);
    }
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::vector<Family> families;
    std::vector<StrategyKind> strategies{StrategyKind::Local};
    std::map<Family, std::vector<StrategyKind>> family_strategies;
    std::vector<std::size_t> horizons{24};
    std::map<std::string, std::size_t> lookbacks;  // "default", "<family>" or "<family>.<strategy>"
    std::vector<ConfigEntry> train_entries;
    std::map<Family, std::vector<ConfigEntry>> family_train_entries;
    ModelSpec model;
    std::filesystem::path output = "results";
    std::uint64_t seed = 1;
    std::size_t workers = 1;

    std::string source_text;
    std::string source_name = "config.ini";
    std::string hash;
    std::filesystem::path base_dir;

    std::size_t lookback_for(Family f, StrategyKind s) const {
        if (f == Family::Persistence) return model.persistence_lag;  // resolved per horizon
        const std::string fam = to_string(f);
        if (auto it = lookbacks.find(fam + "." + to_string(s)); it != lookbacks.end()) return it->second;
        if (auto it = lookbacks.find(fam); it != lookbacks.end()) return it->second;
        if (f == Family::LinReg) return model.linreg_lags;
        if (auto it = lookbacks.find("default"); it != lookbacks.end()) return std::max(it->second, f == Family::Mlp ? model.mlp_lags : 1);
        return f == Family::Mlp ? model.mlp_lags : 168;
    }

    std::vector<RunSpec> expand() const {
        std::vector<RunSpec> runs;
        for (Family f : families) {
            auto it = family_strategies.find(f);
            const auto& strats = it != family_strategies.end() ? it->second : strategies;
            for (StrategyKind s : strats)
                for (std::size_t h : horizons) {
                    RunSpec r{f, s, h, lookback_for(f, s)};
                    if (f == Family::Persistence) r.lookback = model.persistence_lag ? model.persistence_lag : default_persistence_lag(h);
                    runs.push_back(r);
                }
        }
        return runs;
    }

    /// Defaults for a family, then [train], then [train.<family>].
    TrainConfig train_for(const RunSpec& run) const {
        TrainConfig cfg;
        if (run.family == Family::Mlp) {
            cfg.base_lr = 1e-3;
            cfg.schedule = Schedule::StepDecay;
            cfg.decay_gamma = 0.5;
            cfg.warmup_steps = 0;
        }
        if (run.family == Family::Transformer) {
            if (run.strategy == StrategyKind::Multivariate) cfg.batch_size = 32;
            else if (run.lookback >= 336 && run.horizon >= 720) cfg.batch_size = 64;
        }
        for (const auto& e : train_entries) apply_train_entry(cfg, e, "train");
        if (auto it = family_train_entries.find(run.family); it != family_train_entries.end())
            for (const auto& e : it->second) apply_train_entry(cfg, e, std::string("train.") + to_string(run.family));
        cfg.seed = seed;
        cfg.workers = workers;
        return cfg;
    }

    ModelSpec model_for(const RunSpec& run, std::size_t clients) const {
        ModelSpec s = model;
        s.family = run.family;
        s.strategy = StrategySpec{run.strategy, run.lookback, run.horizon};
        s.clients = clients;
        return s;
    }
};

inline ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source_name = "config.ini") {
    const bool json = source_name.ends_with(".json") || detail::trim(text).starts_with("{");
    const ConfigSections sections = json ? detail::parse_json_config(text) : detail::parse_ini(text);
    ExperimentConfig cfg;
    cfg.source_text = text;
    cfg.source_name = std::filesystem::path(source_name).filename().string();
    cfg.hash = hex64(fnv1a(text));
    using detail::parse_number;
    bool have_dataset_path = false, have_families = false, have_matrix = false;

    for (const auto& [section, entries] : sections) {
        if (section == "dataset") {
            for (const auto& e : entries) {
                if (e.key == "id") cfg.dataset.id = e.value;
                else if (e.key == "path") {
                    for (const auto& p : detail::split_list(e.value)) cfg.dataset.paths.emplace_back(p);
                    if (cfg.dataset.paths.empty()) config_error(e, section, "empty path");
                    have_dataset_path = true;
                } else if (e.key == "format") {
                    if (e.value == "wide") cfg.dataset.format = SourceFormat::WideCsv;
                    else if (e.value == "ausgrid") cfg.dataset.format = SourceFormat::AusgridLong;
                    else if (e.value == "matrix") have_matrix = true;
                    else config_error(e, section, "unknown format '" + e.value + "' (wide, ausgrid or matrix)");
                } else if (e.key == "start") {
                    auto m = parse_timestamp(e.value);
                    if (!m || *m % 60 != 0) config_error(e, section, "expected an hourly timestamp, got '" + e.value + "'");
                    cfg.dataset.matrix_start = HourStamp(*m / 60);
                } else if (e.key == "region") {
                    try {
                        cfg.dataset.region = region_from_string(e.value);
                    } catch (const Error&) {
                        config_error(e, section, "unknown region '" + e.value + "'");
                    }
                } else if (e.key == "holiday_file") cfg.dataset.holiday_file = e.value;
                else if (e.key == "max_clients") cfg.dataset.max_clients = parse_number<std::size_t>(e, section);
                else config_error(e, section, "unknown key");
            }
        } else if (section == "experiment") {
            for (const auto& e : entries) {
                if (e.key == "families") {
                    cfg.families.clear();
                    for (const auto& f : detail::split_list(e.value)) cfg.families.push_back(detail::parse_family(f, e, section));
                    if (cfg.families.empty()) config_error(e, section, "empty list");
                    have_families = true;
                } else if (e.key == "strategies") {
                    cfg.strategies.clear();
                    for (const auto& s : detail::split_list(e.value)) cfg.strategies.push_back(detail::parse_strategy(s, e, section));
                    if (cfg.strategies.empty()) config_error(e, section, "empty list");
                } else if (e.key.starts_with("strategies.")) {
                    const std::string fam = e.key.substr(11);
                    const Family f = detail::parse_family(fam, e, section);
                    auto& list = cfg.family_strategies[f];
                    for (const auto& s : detail::split_list(e.value)) list.push_back(detail::parse_strategy(s, e, section));
                } else if (e.key == "horizons") {
                    cfg.horizons.clear();
                    for (const auto& h : detail::split_list(e.value)) {
                        ConfigEntry item{e.key, h, e.line};
                        const auto v = parse_number<std::size_t>(item, section);
                        if (v == 0) config_error(e, section, "horizons must be >= 1");
                        cfg.horizons.push_back(v);
                    }
                    if (cfg.horizons.empty()) config_error(e, section, "empty list");
                } else if (e.key == "seed") cfg.seed = parse_number<std::uint64_t>(e, section);
                else if (e.key == "output") cfg.output = e.value;
                else if (e.key == "workers") cfg.workers = std::max<std::size_t>(1, parse_number<std::size_t>(e, section));
                else config_error(e, section, "unknown key");
            }
        } else if (section == "lookback") {
            for (const auto& e : entries) {
                const auto dot = e.key.find('.');
                const std::string fam = e.key.substr(0, dot);
                if (fam != "default") detail::parse_family(fam, e, section);
                if (dot != std::string::npos) detail::parse_strategy(e.key.substr(dot + 1), e, section);
                const auto v = parse_number<std::size_t>(e, section);
                if (v == 0) config_error(e, section, "lookback must be >= 1");
                cfg.lookbacks[e.key] = v;
            }
        } else if (section == "train" || section.starts_with("train.")) {
            TrainConfig probe;
            for (const auto& e : entries)
                if (!apply_train_entry(probe, e, section)) config_error(e, section, "unknown key");
            if (section == "train") {
                cfg.train_entries = entries;
            } else {
                ConfigEntry where{section, section, entries.empty() ? 0 : entries.front().line};
                cfg.family_train_entries[detail::parse_family(section.substr(6), where, "train")] = entries;
            }
        } else if (section == "model") {
            for (const auto& e : entries)
                if (!apply_model_entry(cfg.model, e, section)) config_error(e, section, "unknown key");
        } else {
            throw Error(ErrorCode::ConfigParse, "unknown section [" + section + "]");
        }
    }
    if (!have_dataset_path) throw Error(ErrorCode::ConfigParse, "field 'dataset.path' is required");
    if (have_matrix && !cfg.dataset.matrix_start)
        throw Error(ErrorCode::ConfigParse, "field 'dataset.start' is required for format = matrix");
    if (!have_matrix) cfg.dataset.matrix_start.reset();
    if (!have_families) throw Error(ErrorCode::ConfigParse, "field 'experiment.families' is required");
    for (Family f : cfg.families) {
        auto it = cfg.family_strategies.find(f);
        for (StrategyKind s : it != cfg.family_strategies.end() ? it->second : cfg.strategies)
            if (!supports(f, s))
                throw Error(ErrorCode::ConfigParse, "field 'experiment.strategies': " + std::string(to_string(f)) +
                                                        " does not support the " + to_string(s) +
                                                        " strategy (use strategies." + to_string(f) + ")");
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::FileNotFound, path.string());
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_experiment_config(ss.str(), path.filename().string());
    cfg.base_dir = std::filesystem::absolute(path).parent_path();
    return cfg;
}

// ---------------------------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------------------------

/// Absolute paths are kept; relative ones resolve against GRIDCAST_DATA_DIR when the file
/// exists there, otherwise against `base_dir`.
inline std::filesystem::path resolve_data_path(const std::filesystem::path& p, const std::filesystem::path& base_dir) {
    if (p.is_absolute()) return p;
    if (const char* env = std::getenv("GRIDCAST_DATA_DIR"); env && *env) {
        auto candidate = std::filesystem::path(env) / p;
        if (std::filesystem::exists(candidate)) return candidate;
    }
    return base_dir.empty() ? p : base_dir / p;
}

inline HolidayCalendar load_calendar(Region region, const std::optional<std::filesystem::path>& override_file) {
    if (override_file) return HolidayCalendar::from_csv(*override_file, region);
    if (region == Region::Custom) return HolidayCalendar::none();
    return HolidayCalendar::from_csv(HolidayCalendar::default_file(resource_dir(), region), region);
}

/// Everything the runs of one dataset share: split, train-fitted scaler and calendar features.
struct PreparedData {
    SplitDataset standardized;
    ScalerParams scaler;
    FeatureMatrix features;
    std::string dataset_hash;
    std::string scaler_hash;
    std::vector<ExcludedClient> dropped;

    WindowSource source() const { return WindowSource{standardized, features}; }
};

inline PreparedData prepare(HourlyDataset hourly, const HolidayCalendar& calendar) {
    PreparedData d;
    d.dropped = hourly.dropped;
    d.dataset_hash = dataset_hash(hourly);
    d.features = build_feature_matrix(hourly, calendar);
    SplitDataset split = split_dataset(std::move(hourly));
    d.scaler = fit_standardizer(split);
    d.scaler_hash = scaler_hash(d.scaler);
    d.standardized = apply_standardizer(split, d.scaler);
    return d;
}

inline RawDataset load_sources(const std::vector<std::filesystem::path>& paths, SourceFormat format,
                               std::optional<HourStamp> matrix_start) {
    std::vector<RawDataset> parts;
    for (const auto& p : paths) parts.push_back(matrix_start ? load_matrix_csv(p, *matrix_start) : load_raw_csv(p, format));
    return merge_raw(std::move(parts));
}

inline HourlyDataset load_dataset(const DatasetConfig& cfg, const std::filesystem::path& base_dir) {
    std::vector<std::filesystem::path> paths;
    for (const auto& p : cfg.paths) paths.push_back(resolve_data_path(p, base_dir));
    HourlyDataset ds = resample_hourly(load_sources(paths, cfg.format, cfg.matrix_start), cfg.region);
    if (cfg.max_clients && cfg.max_clients < ds.clients()) {
        const std::size_t C = ds.clients(), K = cfg.max_clients;
        std::vector<double> values(ds.hours * K);
        for (std::size_t t = 0; t < ds.hours; ++t)
            for (std::size_t c = 0; c < K; ++c) values[t * K + c] = ds.values[t * C + c];
        ds.values = std::move(values);
        ds.client_ids.resize(K);
    }
    return ds;
}

// ---------------------------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------------------------

struct RunOptions {
    bool force = false;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_epochs;
    std::optional<std::size_t> eval_interval;
    std::optional<bool> causal_decoder;
    std::optional<double> clip_norm;
    std::optional<std::filesystem::path> output;
    std::optional<std::filesystem::path> holiday_file;
    std::ostream* log = nullptr;
};

/// Folds command-line overrides into a loaded configuration.
inline void apply_overrides(ExperimentConfig& cfg, const RunOptions& opt) {
    auto add_train = [&](const std::string& key, const std::string& value) {
        cfg.train_entries.push_back({key, value, 0});
        for (auto& [f, entries] : cfg.family_train_entries) entries.push_back({key, value, 0});
    };
    if (opt.workers) cfg.workers = std::max<std::size_t>(1, *opt.workers);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.max_epochs) add_train("max_epochs", std::to_string(*opt.max_epochs));
    if (opt.eval_interval) add_train("eval_interval", std::to_string(*opt.eval_interval));
    if (opt.clip_norm) add_train("clip_norm", format_double(*opt.clip_norm));
    if (opt.causal_decoder) cfg.model.causal_decoder = *opt.causal_decoder;
    if (opt.output) cfg.output = *opt.output;
    if (opt.holiday_file) cfg.dataset.holiday_file = *opt.holiday_file;
}

struct RunOutcome {
    RunSpec spec;
    std::string id;
    enum class Status { Completed, Skipped, Failed } status = Status::Failed;
    std::string error;
    RunResult result;
};

inline const char* to_string(RunOutcome::Status s) {
    switch (s) {
    case RunOutcome::Status::Completed: return "completed";
    case RunOutcome::Status::Skipped: return "skipped";
    case RunOutcome::Status::Failed: return "failed";
    }
    return "?";
}

namespace detail {

class Logger {
public:
    explicit Logger(std::ostream* out) : out_(out) {}
    void operator()(const std::string& msg) {
        if (!out_) return;
        std::lock_guard lock(mu_);
        *out_ << msg << std::endl;
    }

private:
    std::ostream* out_;
    std::mutex mu_;
};

inline std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string safe_name(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    return s;
}

/// Content hash of a manifest without its wall-clock fields.
inline std::string manifest_hash(nlohmann::json manifest) {
    manifest.erase("timing");
    return hex64(fnv1a(manifest.dump()));
}

inline std::optional<RunResult> completed_result(const std::filesystem::path& manifest_path) {
    if (!std::filesystem::exists(manifest_path)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(std::ifstream(manifest_path));
        if (j.value("status", "") != "completed") return std::nullopt;
        RunResult r;
        r.dataset = j.at("dataset");
        r.family = j.at("family");
        r.strategy = j.at("strategy");
        r.horizon = j.at("horizon");
        r.mae = j.at("metrics").at("mae");
        r.mse = j.at("metrics").at("mse");
        r.train_seconds = j.at("timing").at("train_seconds");
        r.manifest = manifest_hash(j);
        return r;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

} // namespace detail

/// Trains (where needed) and evaluates one tuple; writes its manifest, loss curves and checkpoints.
inline RunOutcome execute_run(const ExperimentConfig& cfg, const PreparedData& data, const RunSpec& run,
                              const std::filesystem::path& run_dir, std::size_t workers,
                              const std::function<void(const std::string&)>& log) {
    RunOutcome outcome;
    outcome.spec = run;
    outcome.id = run.id(cfg.dataset.id);
    std::filesystem::create_directories(run_dir);
    const WindowSource src = data.source();
    const std::size_t C = src.data.data.clients();
    const ModelSpec spec = cfg.model_for(run, C);
    TrainConfig train = cfg.train_for(run);
    train.workers = workers;

    nlohmann::json manifest;
    manifest["run_id"] = outcome.id;
    manifest["dataset"] = cfg.dataset.id;
    manifest["family"] = to_string(run.family);
    manifest["strategy"] = to_string(run.strategy);
    manifest["horizon"] = run.horizon;
    manifest["lookback"] = run.lookback;
    manifest["seed"] = cfg.seed;
    manifest["dataset_hash"] = data.dataset_hash;
    manifest["scaler_hash"] = data.scaler_hash;
    manifest["config_hash"] = cfg.hash;
    manifest["config_file"] = cfg.source_name;
    manifest["code_version"] = code_version();
    manifest["code_hash"] = code_hash();
    manifest["clients"] = C;
    manifest["split"] = {{"hours", src.data.data.hours}, {"train_end", src.data.train_end}, {"val_end", src.data.val_end}};
    std::ofstream(run_dir / cfg.source_name) << cfg.source_text;

    const std::size_t test_origins = test_origin_count(src.data, run.lookback, run.horizon);
    MetricAccumulator acc(C, test_origins, run.horizon);
    const auto started = std::chrono::steady_clock::now();
    double train_seconds = 0.0;
    try {
        switch (run.family) {
        case Family::Persistence:
            manifest["model"] = {{"persistence_lag", run.lookback}};
            forecast_persistence(src.data, run.horizon, run.lookback, acc);
            break;
        case Family::LinReg: {
            manifest["model"] = to_json(spec);
            const SampleSet set = enumerate_samples(StrategySpec{run.strategy, run.lookback, run.horizon}, SplitPart::Train, src.data);
            manifest["samples"] = {{"train", set.count()}};
            std::vector<LinRegModel> models(set.groups.size(), LinRegModel(run.lookback, run.horizon, spec.ridge));
            std::vector<std::string> errors(set.groups.size());
            std::atomic<std::size_t> next{0};
            auto worker = [&] {
                for (std::size_t g = next++; g < set.groups.size(); g = next++) {
                    try {
                        models[g].fit(set.groups[g], src);
                    } catch (const Error& e) {
                        errors[g] = e.what();
                    }
                }
            };
            std::vector<std::thread> pool;
            for (std::size_t w = 1; w < std::min(workers, set.groups.size()); ++w) pool.emplace_back(worker);
            worker();
            for (auto& t : pool) t.join();
            train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            for (std::size_t g = 0; g < errors.size(); ++g)
                if (!errors[g].empty())
                    throw Error(ErrorCode::MissingClientModel, (set.groups.size() > 1 ? src.data.data.client_ids[g] + ": " : std::string()) + errors[g]);
            std::vector<const LinRegModel*> ptrs;
            for (const auto& m : models) ptrs.push_back(&m);
            forecast_linreg(ptrs, src, run.horizon, acc);
            break;
        }
        case Family::Mlp:
        case Family::Lstm:
        case Family::Transformer: {
            manifest["model"] = to_json(spec);
            manifest["train"] = to_json(train);
            StrategyRun trained = run_strategy(spec, src, train, log);
            train_seconds = trained.seconds;
            manifest["samples"] = {{"train", trained.train_samples}, {"val", trained.val_samples}};
            const auto ckpt_dir = run_dir / "checkpoints";
            std::filesystem::create_directories(ckpt_dir);
            std::ofstream curves(run_dir / "history.jsonl");
            nlohmann::json models = nlohmann::json::array();
            std::vector<NeuralModel*> ptrs;
            for (auto& tm : trained.models) {
                ptrs.push_back(tm.model.get());
                if (!tm.model) continue;
                const std::string stem = run.strategy == StrategyKind::Local ? "client_" + detail::safe_name(tm.client_id) : "model";
                save_checkpoint(*tm.model, ckpt_dir / stem, tm.seed, data.scaler_hash, {{"client", tm.client_id}});
                for (const auto& ev : tm.history.evals)
                    curves << nlohmann::json{{"client", tm.client_id}, {"step", ev.step}, {"epoch", ev.epoch},
                                             {"train_loss", ev.train_loss}, {"val_loss", ev.val_loss}, {"improved", ev.improved}}
                                  .dump()
                           << '\n';
                models.push_back({{"client", tm.client_id}, {"checkpoint", "checkpoints/" + stem + ".json"}, {"seed", tm.seed},
                                  {"steps", tm.history.steps}, {"epochs", tm.history.epochs},
                                  {"best_step", tm.history.best_step}, {"best_val_loss", tm.history.best_val_loss},
                                  {"early_stopped", tm.history.early_stopped}});
            }
            manifest["models"] = models;
            manifest["failures"] = trained.failures;
            if (!trained.failures.empty())
                throw Error(ErrorCode::MissingClientModel, std::to_string(trained.failures.size()) + " client model(s) failed: " + trained.failures.front());
            forecast_neural(ptrs, src, acc, train.eval_batch_size);
            break;
        }
        }
        manifest["samples"]["test"] = test_origins * C;
        outcome.result = RunResult{cfg.dataset.id, to_string(run.family), to_string(run.strategy), run.horizon,
                                   acc.mae(), acc.mse(), train_seconds, ""};
        if (!std::isfinite(outcome.result.mae) || !std::isfinite(outcome.result.mse))
            throw Error(ErrorCode::Diverged, "non-finite test metrics");
        manifest["status"] = "completed";
        manifest["metrics"] = {{"mae", outcome.result.mae}, {"mse", outcome.result.mse}};
        outcome.status = RunOutcome::Status::Completed;
    } catch (const Error& e) {
        manifest["status"] = "failed";
        manifest["error"] = e.what();
        outcome.error = e.what();
        outcome.status = RunOutcome::Status::Failed;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    manifest["timing"] = {{"train_seconds", train_seconds}, {"wall_seconds", wall}, {"finished_at", detail::utc_now()}};
    outcome.result.manifest = detail::manifest_hash(manifest);
    std::ofstream(run_dir / "manifest.json") << manifest.dump(2) << '\n';
    return outcome;
}

/// Input window in days as shown in result tables.
inline std::string input_days(const std::string& family, std::size_t lookback) {
    if (family == "persistence") return "-";
    return lookback % 24 == 0 ? std::to_string(lookback / 24) : format_fixed(static_cast<double>(lookback) / 24.0, 1);
}

struct ReportFiles {
    std::string mae_markdown;
    std::string mse_markdown;
    std::size_t runs = 0;
};

/// Renders MAE and MSE tables for a results directory, merged with the reference constants.
inline ReportFiles cmd_report(const std::filesystem::path& results_dir,
                              std::optional<std::filesystem::path> reference_file = std::nullopt) {
    const auto csv = results_dir / "results.csv";
    if (!std::filesystem::exists(csv)) throw Error(ErrorCode::NoResults, "no results.csv in " + results_dir.string());
    const auto runs = read_results_csv(csv);
    if (runs.empty()) throw Error(ErrorCode::NoResults, csv.string() + " lists no runs");
    const auto ref_path = reference_file.value_or(default_reference_file(resource_dir()));
    const auto refs = std::filesystem::exists(ref_path) ? load_reference_results(ref_path) : std::vector<ReferenceResult>{};
    auto days = [&](const RunResult& r) {
        const auto manifest = results_dir / "runs" /
                              (r.dataset + "-" + r.family + "-" + r.strategy + "-h" + std::to_string(r.horizon)) / "manifest.json";
        std::size_t lookback = 168;
        if (std::filesystem::exists(manifest)) {
            try {
                lookback = nlohmann::json::parse(std::ifstream(manifest)).value("lookback", lookback);
            } catch (const nlohmann::json::exception&) {
            }
        }
        return input_days(r.family, lookback);
    };
    const auto mae_table = results_table(runs, MetricKind::MAE, refs, days);
    const auto mse_table = results_table(runs, MetricKind::MSE, refs, days);
    const auto dir = results_dir / "tables";
    std::filesystem::create_directories(dir);
    ReportFiles out{mae_table.markdown(), mse_table.markdown(), runs.size()};
    std::ofstream(dir / "mae.md") << out.mae_markdown;
    std::ofstream(dir / "mse.md") << out.mse_markdown;
    std::ofstream(dir / "mae.csv") << mae_table.csv();
    std::ofstream(dir / "mse.csv") << mse_table.csv();
    return out;
}

struct RunSummary {
    std::vector<RunOutcome> outcomes;
    std::filesystem::path output;
    int exit_code = 0;
};

/// Executes every tuple of an experiment. Completed tuples are skipped unless `force` is set.
inline RunSummary cmd_run(ExperimentConfig cfg, const RunOptions& opt = {}) {
    apply_overrides(cfg, opt);
    detail::Logger log(opt.log);
    const auto runs = cfg.expand();
    RunSummary summary;
    summary.output = cfg.output;
    std::filesystem::create_directories(cfg.output);
    std::ofstream(cfg.output / cfg.source_name) << cfg.source_text;
    summary.outcomes.resize(runs.size());

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const std::string id = runs[i].id(cfg.dataset.id);
        summary.outcomes[i].spec = runs[i];
        summary.outcomes[i].id = id;
        if (!opt.force) {
            if (auto done = detail::completed_result(cfg.output / "runs" / id / "manifest.json")) {
                summary.outcomes[i].status = RunOutcome::Status::Skipped;
                summary.outcomes[i].result = *done;
                log(id + ": skipped (completed)");
                continue;
            }
        }
        pending.push_back(i);
    }

    if (!pending.empty()) {
        std::optional<PreparedData> data;
        try {
            const HolidayCalendar cal = load_calendar(cfg.dataset.region, cfg.dataset.holiday_file
                                                                              ? std::optional(resolve_data_path(*cfg.dataset.holiday_file, cfg.base_dir))
                                                                              : std::nullopt);
            data = prepare(load_dataset(cfg.dataset, cfg.base_dir), cal);
            log("dataset " + cfg.dataset.id + ": " + std::to_string(data->standardized.data.clients()) + " clients, " +
                std::to_string(data->standardized.data.hours) + " hours, hash " + data->dataset_hash);
        } catch (const Error& e) {
            for (auto i : pending) summary.outcomes[i].error = e.what();
            log(std::string("dataset preparation failed: ") + e.what());
        }
        if (data) {
            // Independent tuples share the worker budget; a lone tuple uses all workers itself.
            const std::size_t parallel = std::min(cfg.workers, pending.size());
            const std::size_t inner = parallel > 1 ? 1 : cfg.workers;
            std::atomic<std::size_t> next{0};
            auto worker = [&] {
                for (std::size_t k = next++; k < pending.size(); k = next++) {
                    const std::size_t i = pending[k];
                    log(summary.outcomes[i].id + ": started");
                    summary.outcomes[i] = execute_run(cfg, *data, runs[i], cfg.output / "runs" / summary.outcomes[i].id,
                                                      inner, [&](const std::string& m) { log("  " + m); });
                    const auto& o = summary.outcomes[i];
                    log(o.id + ": " + to_string(o.status) +
                        (o.status == RunOutcome::Status::Failed ? " (" + o.error + ")"
                                                                : " mae=" + format_fixed(o.result.mae, 4) + " mse=" + format_fixed(o.result.mse, 4)));
                }
            };
            std::vector<std::thread> pool;
            for (std::size_t w = 1; w < parallel; ++w) pool.emplace_back(worker);
            worker();
            for (auto& t : pool) t.join();
        }
    }

    std::vector<RunResult> results;
    for (const auto& o : summary.outcomes) {
        if (o.status == RunOutcome::Status::Failed) summary.exit_code = 2;
        else results.push_back(o.result);
    }
    write_results_csv(results, cfg.output / "results.csv");
    if (!results.empty()) cmd_report(cfg.output);
    return summary;
}

/// lr_at for steps 0..steps as "step,lr" CSV lines.
inline std::string cmd_schedule_dump(TrainConfig cfg, std::size_t steps, std::size_t steps_per_epoch) {
    cfg.steps_per_epoch = std::max<std::size_t>(1, steps_per_epoch);
    std::ostringstream out;
    out << "step,lr\n";
    for (std::size_t s = 0; s <= steps; ++s) out << s << ',' << format_double(lr_at(s, cfg)) << '\n';
    return out.str();
}

/// Writes the canonical hourly CSV plus a JSON sidecar (same stem) with the client list,
/// dropped clients and split boundaries. Several inputs are merged as consecutive periods.
inline nlohmann::json cmd_convert(const std::vector<std::filesystem::path>& inputs, SourceFormat format,
                                  const std::filesystem::path& output, Region region = Region::Custom,
                                  std::optional<HourStamp> matrix_start = std::nullopt) {
    const HourlyDataset ds = resample_hourly(load_sources(inputs, format, matrix_start), region);
    if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
    write_wide_csv(ds, output);
    const SplitDataset split = split_dataset(ds);
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& d : ds.dropped) dropped.push_back({{"client", d.client_id}, {"reason", d.reason}});
    nlohmann::json sources = nlohmann::json::array();
    for (const auto& p : inputs) sources.push_back(p.filename().string());
    nlohmann::json side{{"sources", sources},
                        {"source_format", matrix_start ? "matrix" : format == SourceFormat::WideCsv ? "wide" : "ausgrid"},
                        {"region", to_string(region)},
                        {"start", ds.start.iso()},
                        {"hours", ds.hours},
                        {"clients", ds.client_ids},
                        {"dropped", dropped},
                        {"split", {{"train", {0, split.train_end}}, {"val", {split.train_end, split.val_end}}, {"test", {split.val_end, ds.hours}}}},
                        {"dataset_hash", dataset_hash(ds)}};
    auto sidecar = output;
    sidecar.replace_extension(".json");
    std::ofstream(sidecar) << side.dump(2) << '\n';
    return side;
}

} // namespace gridcast
