// Baseline reproduction on the public datasets. Needs GRIDCAST_DATA_DIR pointing at the raw files named in
// configs/electricity.ini and configs/ausgrid.ini; exits 77 (skipped) when they are absent.
#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

using namespace gridcast;

namespace {

constexpr int kSkipped = 77;

struct Expected {
    Family family;
    std::size_t horizon;
    double mae;
    std::optional<double> mse;
    double tol;
};

bool all_present(const ExperimentConfig& cfg) {
    for (const auto& p : cfg.dataset.paths)
        if (!std::filesystem::exists(resolve_data_path(p, cfg.base_dir))) return false;
    return true;
}

std::string fmt(double v, int decimals = 3) { return format_fixed(v, decimals); }

// Runs the given baselines and checks each metric. Returns the number of failed lines.
int check_dataset(const std::filesystem::path& config, const std::vector<Family>& families, const std::vector<Expected>& expected,
                  int criterion, double budget_seconds, const gridcast::testing::TempDir& out) {
    auto cfg = load_experiment_config(config);
    cfg.families = families;
    cfg.strategies = {StrategyKind::Local};
    cfg.family_strategies.clear();
    cfg.horizons.clear();
    for (const auto& e : expected)
        if (std::find(cfg.horizons.begin(), cfg.horizons.end(), e.horizon) == cfg.horizons.end()) cfg.horizons.push_back(e.horizon);
    RunOptions opt;
    opt.output = out / cfg.dataset.id;
    opt.force = true;
    opt.workers = std::max(1u, std::thread::hardware_concurrency());
    const auto t0 = std::chrono::steady_clock::now();
    const auto summary = cmd_run(cfg, opt);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    int failed = 0;
    for (const auto& e : expected) {
        const RunOutcome* hit = nullptr;
        for (const auto& o : summary.outcomes)
            if (o.spec.family == e.family && o.spec.horizon == e.horizon) hit = &o;
        std::string line = cfg.dataset.id + " " + to_string(e.family) + " h=" + std::to_string(e.horizon) + ": ";
        bool ok = hit && hit->status == RunOutcome::Status::Completed;
        if (!ok) {
            line += hit ? "failed (" + hit->error + ")" : "not run";
        } else {
            const double mae = hit->result.mae, mse = hit->result.mse;
            ok = std::abs(mae - e.mae) <= e.tol;
            line += "MAE " + fmt(mae) + " (expected " + fmt(e.mae) + " +/- " + fmt(e.tol) + ")";
            if (e.mse) {
                ok = ok && std::abs(mse - *e.mse) <= e.tol;
                line += ", MSE " + fmt(mse) + " (expected " + fmt(*e.mse) + ")";
            }
        }
        std::cout << (ok ? "PASS" : "FAIL") << "  [" << criterion << "] " << line << std::endl;
        failed += !ok;
    }
    const bool fast = seconds < budget_seconds;
    std::cout << (fast ? "PASS" : "FAIL") << "  [" << criterion << "] " << cfg.dataset.id << " runtime " << fmt(seconds, 1)
              << " s (budget " << fmt(budget_seconds, 0) << " s, includes loading)" << std::endl;
    return failed + !fast;
}

} // namespace

int main() {
    const std::filesystem::path configs = GRIDCAST_CONFIG_DIR;
    const auto electricity = load_experiment_config(configs / "electricity.ini");
    const auto ausgrid = load_experiment_config(configs / "ausgrid.ini");
    const bool have_e = all_present(electricity), have_a = all_present(ausgrid);
    if (!have_e && !have_a) {
        std::cout << "SKIP  [1,2] datasets not found; set GRIDCAST_DATA_DIR (see README)" << std::endl;
        return kSkipped;
    }
    gridcast::testing::TempDir out;
    int failed = 0;
    try {
        if (have_e) {
            failed += check_dataset(configs / "electricity.ini", {Family::Persistence},
                                    {{Family::Persistence, 24, 0.279, 0.214, 0.01},
                                     {Family::Persistence, 96, 0.279, 0.214, 0.01},
                                     {Family::Persistence, 720, 0.447, 0.490, 0.01}},
                                    1, 60.0, out);
            failed += check_dataset(configs / "electricity.ini", {Family::LinReg},
                                    {{Family::LinReg, 24, 0.203, std::nullopt, 0.012}, {Family::LinReg, 720, 0.296, std::nullopt, 0.015}},
                                    2, 900.0, out);
        } else {
            std::cout << "SKIP  [1,2] electricity files not found" << std::endl;
        }
        if (have_a) {
            failed += check_dataset(configs / "ausgrid.ini", {Family::Persistence},
                                    {{Family::Persistence, 24, 0.647, std::nullopt, 0.015},
                                     {Family::Persistence, 96, 0.647, std::nullopt, 0.015},
                                     {Family::Persistence, 720, 0.717, std::nullopt, 0.015}},
                                    1, 60.0, out);
        } else {
            std::cout << "SKIP  [1] ausgrid files not found" << std::endl;
        }
    } catch (const std::exception& e) {
        std::cout << "FAIL  [1,2] " << e.what() << std::endl;
        return 1;
    }
    return failed ? 1 : 0;
}
