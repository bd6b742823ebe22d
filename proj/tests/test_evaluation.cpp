#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace gridcast;
using gridcast::testing::TempDir;
using gridcast::testing::write_file;

namespace {

ForecastSet random_set(std::size_t C, std::size_t O, std::size_t h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    auto fs = ForecastSet::make(C, O, h);
    for (auto& v : fs.predicted) v = n(rng);
    for (auto& v : fs.actual) v = n(rng);
    return fs;
}

// Plain triple loop with long double accumulation.
std::pair<double, double> loop_metrics(const ForecastSet& fs) {
    long double a = 0, s = 0;
    for (std::size_t c = 0; c < fs.clients; ++c)
        for (std::size_t t = 0; t < fs.origins; ++t)
            for (std::size_t i = 0; i < fs.horizon; ++i) {
                const std::size_t k = fs.offset(c, t) + i;
                const long double e = static_cast<long double>(fs.actual[k]) - fs.predicted[k];
                a += e < 0 ? -e : e;
                s += e * e;
            }
    const long double n = static_cast<long double>(fs.clients * fs.origins * fs.horizon);
    return {static_cast<double>(a / n), static_cast<double>(s / n)};
}

SplitDataset split_of(std::size_t C, std::size_t T, const std::function<double(std::size_t, std::size_t)>& f) {
    HourlyDataset ds;
    ds.start = HourStamp::from_civil(2012, 1, 2, 0);
    ds.hours = T;
    for (std::size_t c = 0; c < C; ++c) ds.client_ids.push_back("c" + std::to_string(c));
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) ds.values.push_back(f(t, c));
    return split_dataset(std::move(ds));
}

RunResult run(std::string ds, std::string fam, std::string strat, std::size_t h, double mae, double mse = 0.0) {
    return RunResult{std::move(ds), std::move(fam), std::move(strat), h, mae, mse, 1.0, "x"};
}

} // namespace

TEST(Metrics, PerfectForecastScoresZero) {
    auto fs = random_set(3, 4, 24, 1);
    fs.predicted = fs.actual;
    EXPECT_EQ(mae(fs), 0.0);
    EXPECT_EQ(mse(fs), 0.0);
}

TEST(Metrics, ConstantOffset) {
    auto fs = random_set(3, 4, 24, 2);
    for (std::size_t i = 0; i < fs.predicted.size(); ++i) fs.predicted[i] = fs.actual[i] + (i % 2 ? 0.5 : -0.5);
    EXPECT_NEAR(mae(fs), 0.5, 1e-15);
    EXPECT_NEAR(mse(fs), 0.25, 1e-15);
}

TEST(Metrics, MatchTripleLoopAndJensen) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto fs = random_set(1 + seed % 4, 7 + seed, 24 * (1 + seed % 3), seed);
        const auto [a, s] = loop_metrics(fs);
        EXPECT_NEAR(mae(fs), a, 1e-12);
        EXPECT_NEAR(mse(fs), s, 1e-12);
        EXPECT_LE(mae(fs) * mae(fs), mse(fs));
    }
}

TEST(Metrics, InvariantToBlockOrder) {
    const auto fs = random_set(4, 9, 24, 3);
    auto perm = ForecastSet::make(4, 9, 24);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t t = 0; t < 9; ++t) {
            const std::size_t src = fs.offset(3 - c, 8 - t);
            perm.add(c, t, std::span(fs.predicted).subspan(src, 24), std::span(fs.actual).subspan(src, 24));
        }
    EXPECT_NEAR(mae(perm), mae(fs), 1e-14);
    EXPECT_NEAR(mse(perm), mse(fs), 1e-14);
}

TEST(Metrics, EmptyAndIncompleteSetsAreRejected) {
    try {
        mae(ForecastSet::make(0, 0, 24));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyForecastSet);
    }
    MetricAccumulator acc(2, 3, 4);
    const std::vector<double> z(4, 0.0);
    acc.add(0, 0, z, z);
    EXPECT_EQ(acc.missing(), 5u);
    EXPECT_THROW(acc.mae(), Error);
    EXPECT_THROW(acc.add(0, 1, std::vector<double>(3), z), Error);
}

TEST(Persistence, RollingOriginsMatchIndexShift) {
    const auto ds = split_of(2, 143, [](std::size_t t, std::size_t c) { return std::sin(0.3 * t) + 10.0 * c + 0.01 * t * t; });
    ASSERT_EQ(ds.val_end, 114u);
    const std::size_t O = test_origin_count(ds, 24, 24);
    ASSERT_EQ(O, 5u);
    auto fs = ForecastSet::make(2, O, 24, 114);
    forecast_persistence(ds, 24, 24, fs);
    EXPECT_EQ(fs.blocks(), 10u);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < O; ++k) {
            const std::size_t t = 114 + k;
            for (std::size_t i = 0; i < 24; ++i) {
                EXPECT_EQ(fs.predicted[fs.offset(c, k) + i], ds.data.at(t + 1 + i - 24, c));
                EXPECT_EQ(fs.actual[fs.offset(c, k) + i], ds.data.at(t + 1 + i, c));
            }
        }
}

TEST(Persistence, WeeklyLagAcrossHorizons) {
    // Weekly pattern plus noise: every step's error is the difference of two noise draws.
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 0.1);
    std::vector<double> noise(20000);
    for (auto& v : noise) v = n(rng);
    const auto ds = split_of(1, 20000, [&](std::size_t t, std::size_t) {
        return std::sin(2 * std::numbers::pi * (t % 168) / 168.0) + 0.5 * std::sin(2 * std::numbers::pi * (t % 24) / 24.0) + noise[t];
    });
    std::map<std::size_t, double> maes;
    for (std::size_t h : {24u, 96u}) {
        const std::size_t O = test_origin_count(ds, 168, h);
        MetricAccumulator acc(1, O, h);
        forecast_persistence(ds, h, 168, acc);
        // oracle: each test hour appears in as many blocks as origins reach it
        const std::size_t first = ds.val_end;
        long double num = 0;
        for (std::size_t u = first + 1; u < ds.data.hours; ++u) {
            const std::size_t lo = u > h ? std::max(first, u - h) : first;
            const std::size_t hi = std::min(u - 1, ds.data.hours - h - 1);
            if (hi < lo) continue;
            num += static_cast<long double>(hi - lo + 1) * std::abs(ds.data.at(u, 0) - ds.data.at(u - 168, 0));
        }
        const double oracle = static_cast<double>(num / static_cast<long double>(O * h));
        EXPECT_NEAR(acc.mae(), oracle, 1e-12);
        maes[h] = acc.mae();
    }
    EXPECT_NEAR(maes[24], maes[96], 0.01 * maes[24]);
    EXPECT_NEAR(maes[24], 0.1 * 2 / std::sqrt(std::numbers::pi), 0.01);
}

TEST(ForecastNeural, GlobalAndLocalAgreeForOneClient) {
    gridcast::testing::SyntheticOptions opt;
    opt.clients = 1;
    opt.days = 30;
    const auto p = prepare(gridcast::testing::synthetic_hourly(opt), HolidayCalendar::none());
    const auto src = p.source();
    ModelSpec spec;
    spec.family = Family::Lstm;
    spec.strategy = {StrategyKind::Local, 24, 12};
    spec.clients = 1;
    spec.lstm_units = 6;
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.warmup_steps = 5;
    cfg.max_epochs = 1;
    cfg.base_lr = 1e-3;
    const auto local = run_strategy(spec, src, cfg);
    spec.strategy.kind = StrategyKind::Global;
    cfg.seed = local.models[0].seed;  // the local run derives its seed from the client id
    const auto global = run_strategy(spec, src, cfg);
    const std::size_t O = test_origin_count(src.data, 24, 12);
    auto a = ForecastSet::make(1, O, 12), b = ForecastSet::make(1, O, 12);
    NeuralModel* pa[] = {local.models[0].model.get()};
    NeuralModel* pb[] = {global.models[0].model.get()};
    forecast_neural(pa, src, a);
    forecast_neural(pb, src, b, 7);
    EXPECT_EQ(a.predicted, b.predicted);
    EXPECT_EQ(a.actual, b.actual);
    EXPECT_GT(mae(a), 0.0);
}

TEST(ResultsCsv, RoundTrip) {
    TempDir dir;
    std::vector<RunResult> runs{run("electricity", "lstm", "global", 24, 0.123456789012345, 0.0456),
                                run("ausgrid", "persistence", "local", 96, 1.0 / 3.0, 2.0 / 7.0)};
    write_results_csv(runs, dir / "r.csv");
    EXPECT_EQ(gridcast::testing::read_file(dir / "r.csv").substr(0, std::string(kResultsHeader).size()), kResultsHeader);
    const auto back = read_results_csv(dir / "r.csv");
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].dataset, runs[i].dataset);
        EXPECT_EQ(back[i].strategy, runs[i].strategy);
        EXPECT_EQ(back[i].horizon, runs[i].horizon);
        EXPECT_EQ(back[i].mae, runs[i].mae);
        EXPECT_EQ(back[i].mse, runs[i].mse);
    }
    write_file(dir / "bad.csv", std::string(kResultsHeader) + "\na,b,c\n");
    EXPECT_THROW(read_results_csv(dir / "bad.csv"), Error);
}

TEST(ResultsTable, DominantRowIsBoldEverywhere) {
    std::vector<RunResult> runs{run("electricity", "lstm", "global", 24, 0.2), run("electricity", "lstm", "global", 96, 0.3),
                                run("electricity", "mlp", "global", 24, 0.25), run("electricity", "mlp", "global", 96, 0.35),
                                run("electricity", "transformer", "local", 24, 0.4),
                                run("electricity", "transformer", "local", 96, 0.45),
                                run("electricity", "lstm", "local", 24, 0.5), run("electricity", "lstm", "local", 96, 0.55)};
    const auto md = results_table(runs, MetricKind::MAE).markdown();
    EXPECT_NE(md.find("| Strategy | Model | Input (days) |"), std::string::npos);
    EXPECT_NE(md.find("| G | LSTM | 7 | **0.200** | **0.300** |"), std::string::npos) << md;
    EXPECT_NE(md.find("| G | MLP | 7 | 0.250 | 0.350 |"), std::string::npos) << md;
    EXPECT_NE(md.find("| L | Transformer | 7 | *0.400* | *0.450* |"), std::string::npos) << md;
    EXPECT_NE(md.find("| L | LSTM | 7 | 0.500 | 0.550 |"), std::string::npos) << md;
    // local block precedes the global one
    EXPECT_LT(md.find("| L |"), md.find("| G |"));
}

TEST(ResultsTable, TiesAtThreeDecimalsShareTheMark) {
    std::vector<RunResult> runs{run("e", "lstm", "global", 24, 0.20004), run("e", "mlp", "global", 24, 0.19996),
                                run("e", "linreg", "local", 24, 0.3001), run("e", "mlp", "local", 24, 0.2999)};
    const auto md = results_table(runs, MetricKind::MAE).markdown();
    EXPECT_NE(md.find("| G | LSTM | 7 | **0.200** |"), std::string::npos) << md;
    EXPECT_NE(md.find("| G | MLP | 7 | **0.200** |"), std::string::npos) << md;
    EXPECT_NE(md.find("| L | Linear regression | 7 | *0.300* |"), std::string::npos) << md;
    EXPECT_NE(md.find("| L | MLP | 7 | *0.300* |"), std::string::npos) << md;
}

TEST(ResultsTable, ReferenceRowsAndMetricChoice) {
    const auto refs = load_reference_results(default_reference_file(GRIDCAST_RESOURCE_DIR));
    ASSERT_FALSE(refs.empty());
    const auto it = std::find_if(refs.begin(), refs.end(), [](const ReferenceResult& r) {
        return r.model == "Informer" && r.strategy == "MV" && r.dataset == "electricity" && r.horizon == 24;
    });
    ASSERT_NE(it, refs.end());
    EXPECT_EQ(it->mae, 0.399);
    EXPECT_EQ(it->mse, 0.305);
    std::vector<RunResult> runs{run("electricity", "transformer", "global", 24, 0.25, 0.15),
                                run("electricity", "persistence", "local", 24, 0.6, 0.9)};
    const auto mae_md = results_table(runs, MetricKind::MAE, refs).markdown();
    const auto mse_md = results_table(runs, MetricKind::MSE, refs, [](const RunResult&) { return "14"; }).markdown();
    EXPECT_NE(mae_md.find("| MV | Informer | 4 | 0.399 |"), std::string::npos) << mae_md;
    EXPECT_NE(mae_md.find("| MV | FEDformer | 4 | *0.284* |"), std::string::npos) << mae_md;
    EXPECT_NE(mae_md.find("| G | PatchTST | 14 | **0.190** |"), std::string::npos) << mae_md;
    EXPECT_NE(mae_md.find("| G | Transformer | 7 | 0.250 |"), std::string::npos) << mae_md;
    EXPECT_NE(mae_md.find("| L | Persistence | - |"), std::string::npos) << mae_md;
    EXPECT_NE(mse_md.find("| MV | FEDformer | 4 | *0.164* |"), std::string::npos) << mse_md;
    EXPECT_NE(mse_md.find("| G | PatchTST | 14 | **0.094** |"), std::string::npos) << mse_md;
    EXPECT_NE(mse_md.find("| G | Transformer | 14 | 0.150 |"), std::string::npos) << mse_md;
    // columns no local run reports are left out
    EXPECT_EQ(mae_md.find("h=96"), std::string::npos);
    const auto csv = results_table(runs, MetricKind::MAE, refs).csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "strategy,model,input_days,electricity_h24");
}
