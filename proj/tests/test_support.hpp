#pragma once

#include <gridcast.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>

namespace gridcast::testing {

/// Directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("gridcast-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path) << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct SyntheticOptions {
    std::size_t clients = 4;
    std::size_t days = 60;
    std::uint64_t seed = 1;
    double noise = 0.3;
    HourStamp start = HourStamp::from_civil(2012, 1, 2, 0);  // a Monday
};

/// Loads sharing one daily and weekly profile; each client adds its own level, amplitude and noise.
inline HourlyDataset synthetic_hourly(const SyntheticOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    HourlyDataset ds;
    ds.start = opt.start;
    ds.hours = opt.days * 24;
    for (std::size_t c = 0; c < opt.clients; ++c) ds.client_ids.push_back("client" + std::to_string(c));
    std::vector<double> level(opt.clients), amp(opt.clients), phase(opt.clients);
    for (std::size_t c = 0; c < opt.clients; ++c) {
        level[c] = 5.0 + 5.0 * u(rng);
        amp[c] = 1.0 + u(rng);
        phase[c] = 0.3 * (u(rng) - 0.5);
    }
    ds.values.resize(ds.hours * opt.clients);
    for (std::size_t t = 0; t < ds.hours; ++t) {
        const HourStamp ts = ds.timestamp(t);
        const double hour = ts.hour_of_day();
        const bool weekend = ts.weekday() >= 5;
        const double profile = std::sin(2.0 * std::numbers::pi * (hour - 6.0) / 24.0) +
                               0.5 * std::sin(4.0 * std::numbers::pi * hour / 24.0) - (weekend ? 0.8 : 0.0);
        for (std::size_t c = 0; c < opt.clients; ++c)
            ds.values[t * opt.clients + c] =
                level[c] + amp[c] * (profile + phase[c] * std::cos(2.0 * std::numbers::pi * hour / 24.0)) + opt.noise * n01(rng);
    }
    return ds;
}

/// Writes a dataset in the canonical wide layout.
inline std::filesystem::path write_synthetic_csv(const std::filesystem::path& path, const SyntheticOptions& opt) {
    write_wide_csv(synthetic_hourly(opt), path);
    return path;
}

} // namespace gridcast::testing
