#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace gridcast;
using gridcast::testing::read_file;
using gridcast::testing::SyntheticOptions;
using gridcast::testing::TempDir;
using gridcast::testing::write_file;
using gridcast::testing::write_synthetic_csv;

namespace {

std::string config_text(const std::filesystem::path& csv, const std::filesystem::path& out, const std::string& extra = "") {
    return "[dataset]\nid = synth\npath = " + csv.string() + "\n\n[experiment]\nfamilies = persistence, linreg\n"
           "horizons = 24, 48\noutput = " + out.string() + "\n" + extra;
}

void expect_config_error(const std::string& text, const std::string& fragment) {
    try {
        parse_experiment_config(text);
        FAIL() << "accepted: " << text;
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ConfigParse);
        EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
}

} // namespace

TEST(Config, ParsesSectionsAndExpandsTuples) {
    const auto cfg = parse_experiment_config(R"([dataset]
id = electricity
path = a.csv, b.csv
region = portugal

[experiment]
families = persistence, lstm, mlp   # trailing comment
strategies = local, global
strategies.lstm = multivariate
strategies.persistence = local
horizons = 24, 96
seed = 9

[lookback]
default = 336
lstm.multivariate = 96

[train]
base_lr = 5e-4
max_epochs = 3

[train.mlp]
max_epochs = 7

[model]
d_model = 32
)");
    EXPECT_EQ(cfg.dataset.id, "electricity");
    EXPECT_EQ(cfg.dataset.paths.size(), 2u);
    EXPECT_EQ(cfg.dataset.region, Region::Portugal);
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.model.d_model, 32u);
    const auto runs = cfg.expand();
    // persistence: L x2 horizons, lstm: MV x2, mlp: L,G x2
    ASSERT_EQ(runs.size(), 8u);
    std::map<std::string, RunSpec> by_id;
    for (const auto& r : runs) by_id[r.id("e")] = r;
    EXPECT_EQ(by_id.at("e-persistence-local-h24").lookback, 168u);
    EXPECT_EQ(by_id.at("e-lstm-multivariate-h96").lookback, 96u);
    EXPECT_EQ(by_id.at("e-mlp-global-h24").lookback, 336u);
    EXPECT_FALSE(by_id.contains("e-persistence-global-h24"));
    const auto lstm_cfg = cfg.train_for(by_id.at("e-lstm-multivariate-h24"));
    EXPECT_EQ(lstm_cfg.base_lr, 5e-4);
    EXPECT_EQ(lstm_cfg.max_epochs, 3u);
    EXPECT_EQ(lstm_cfg.seed, 9u);
    EXPECT_EQ(cfg.train_for(by_id.at("e-mlp-local-h24")).max_epochs, 7u);
}

TEST(Config, PersistenceLagFollowsTheHorizon) {
    const auto cfg = parse_experiment_config("[dataset]\npath=x.csv\n[experiment]\nfamilies=persistence\nhorizons=24,168,336,1000\n");
    const auto runs = cfg.expand();
    ASSERT_EQ(runs.size(), 4u);
    EXPECT_EQ(runs[0].lookback, 168u);
    EXPECT_EQ(runs[1].lookback, 168u);
    EXPECT_EQ(runs[2].lookback, 720u);
    EXPECT_EQ(runs[3].lookback, 1000u);
}

TEST(Config, FamilyDefaults) {
    const auto cfg = parse_experiment_config("[dataset]\npath=x.csv\n[experiment]\nfamilies=mlp,transformer\nstrategies=global\n");
    const auto mlp = cfg.train_for({Family::Mlp, StrategyKind::Global, 24, 168});
    EXPECT_EQ(mlp.base_lr, 1e-3);
    EXPECT_EQ(mlp.schedule, Schedule::StepDecay);
    EXPECT_EQ(cfg.train_for({Family::Transformer, StrategyKind::Multivariate, 24, 168}).batch_size, 32u);
    EXPECT_EQ(cfg.train_for({Family::Transformer, StrategyKind::Global, 720, 336}).batch_size, 64u);
    EXPECT_EQ(cfg.train_for({Family::Transformer, StrategyKind::Global, 24, 168}).batch_size, TrainConfig{}.batch_size);
}

TEST(Config, JsonFormIsEquivalent) {
    const auto ini = parse_experiment_config("[dataset]\npath = x.csv\n[experiment]\nfamilies = lstm\nhorizons = 24,96\n[train]\nmax_epochs = 2\n");
    const auto json = parse_experiment_config(
        R"({"dataset": {"path": "x.csv"}, "experiment": {"families": ["lstm"], "horizons": [24, 96]}, "train": {"max_epochs": 2}})",
        "c.json");
    ASSERT_EQ(ini.expand().size(), json.expand().size());
    EXPECT_EQ(json.expand()[1].horizon, 96u);
    EXPECT_EQ(json.train_for(json.expand()[0]).max_epochs, 2u);
    expect_config_error("{\"dataset\": 3}", "must be an object");
    expect_config_error("{\"dataset\": ", "invalid JSON");
}

TEST(Config, ErrorsNameTheLineAndField) {
    const std::string head = "[dataset]\npath = x.csv\n[experiment]\nfamilies = lstm\n";
    expect_config_error(head + "horizons = 24, abc\n", "line 5: field 'experiment.horizons'");
    expect_config_error(head + "[train]\nmax_epochs = -1\n", "line 6: field 'train.max_epochs'");
    expect_config_error(head + "[model]\nwidth = 3\n", "line 6: field 'model.width'");
    expect_config_error(head + "[train]\nschedule = cyclic\n", "unknown schedule");
    expect_config_error("[dataset]\npath = x.csv\n[experiment]\nfamilies = persistence\nstrategies = global\n", "does not support");
    expect_config_error("[dataset]\npath = x.csv\n[experiment]\nfamilies = arima\n", "line 4: field 'experiment.families'");
    expect_config_error("[experiment]\nfamilies = lstm\n", "dataset.path");
    expect_config_error("[dataset]\npath = x.csv\n", "experiment.families");
    expect_config_error("[dataset]\npath = x.csv\nformat = matrix\n[experiment]\nfamilies = lstm\n", "dataset.start");
    expect_config_error("[dataset\n", "line 1");
    expect_config_error("[dataset]\njust words\n", "line 2");
    expect_config_error("[weird]\n", "unknown section");
}

TEST(Experiment, BaselineRunWritesResultsAndSkipsOnRerun) {
    TempDir dir;
    SyntheticOptions opt;
    opt.clients = 3;
    opt.days = 70;
    write_synthetic_csv(dir / "synth.csv", opt);
    write_file(dir / "exp.ini", config_text(dir / "synth.csv", dir / "out"));
    const auto cfg = load_experiment_config(dir / "exp.ini");
    const auto first = cmd_run(cfg);
    EXPECT_EQ(first.exit_code, 0);
    ASSERT_EQ(first.outcomes.size(), 4u);
    for (const auto& o : first.outcomes) {
        EXPECT_EQ(o.status, RunOutcome::Status::Completed) << o.id << " " << o.error;
        EXPECT_GT(o.result.mae, 0.0);
        EXPECT_TRUE(std::filesystem::exists(dir / "out" / "runs" / o.id / "manifest.json"));
        EXPECT_TRUE(std::filesystem::exists(dir / "out" / "runs" / o.id / "exp.ini"));
    }
    const std::string csv = read_file(dir / "out" / "results.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kResultsHeader);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "tables" / "mae.md"));

    const auto second = cmd_run(cfg);
    for (const auto& o : second.outcomes) EXPECT_EQ(o.status, RunOutcome::Status::Skipped) << o.id;
    EXPECT_EQ(read_file(dir / "out" / "results.csv"), csv);

    RunOptions force;
    force.force = true;
    force.output = dir / "out2";
    const auto third = cmd_run(cfg, force);
    const auto a = read_results_csv(dir / "out" / "results.csv"), b = read_results_csv(dir / "out2" / "results.csv");
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].mae, b[i].mae);
        EXPECT_EQ(a[i].mse, b[i].mse);
        EXPECT_EQ(a[i].manifest, b[i].manifest);
    }
}

TEST(Experiment, ManifestRecordsProvenance) {
    TempDir dir;
    SyntheticOptions opt;
    opt.clients = 2;
    opt.days = 40;
    write_synthetic_csv(dir / "synth.csv", opt);
    write_file(dir / "exp.ini",
               config_text(dir / "synth.csv", dir / "out", "[model]\nlstm_units = 4\n[train]\nmax_epochs = 1\nwarmup_steps = 5\n"));
    auto cfg = load_experiment_config(dir / "exp.ini");
    cfg.families = {Family::Lstm};
    cfg.horizons = {24};
    cfg.strategies = {StrategyKind::Local};
    const auto summary = cmd_run(cfg);
    ASSERT_EQ(summary.outcomes.size(), 1u);
    ASSERT_EQ(summary.outcomes[0].status, RunOutcome::Status::Completed) << summary.outcomes[0].error;
    const auto run_dir = dir / "out" / "runs" / summary.outcomes[0].id;
    const auto m = nlohmann::json::parse(read_file(run_dir / "manifest.json"));
    for (const char* key : {"dataset_hash", "scaler_hash", "config_hash", "code_version", "code_hash", "seed", "split", "timing"})
        EXPECT_TRUE(m.contains(key)) << key;
    EXPECT_EQ(m["models"].size(), 2u);
    EXPECT_EQ(m["split"]["train_end"], 40u * 24 * 7 / 10);
    EXPECT_TRUE(std::filesystem::exists(run_dir / "history.jsonl"));
    auto ckpt = run_dir / m["models"][0]["checkpoint"].get<std::string>();
    ASSERT_TRUE(std::filesystem::exists(ckpt));
    const auto loaded = load_checkpoint(ckpt.replace_extension());
    EXPECT_EQ(loaded->spec().strategy.kind, StrategyKind::Local);
}

TEST(Experiment, MissingDataFailsEveryTuple) {
    TempDir dir;
    write_file(dir / "exp.ini", config_text(dir / "absent.csv", dir / "out"));
    const auto summary = cmd_run(load_experiment_config(dir / "exp.ini"));
    EXPECT_EQ(summary.exit_code, 2);
    for (const auto& o : summary.outcomes) {
        EXPECT_EQ(o.status, RunOutcome::Status::Failed);
        EXPECT_FALSE(o.error.empty());
    }
}

TEST(Report, RequiresResults) {
    TempDir dir;
    try {
        cmd_report(dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoResults);
    }
    write_results_csv({}, dir / "results.csv");
    EXPECT_THROW(cmd_report(dir.path()), Error);
}

TEST(Report, InputDaysFromLookback) {
    EXPECT_EQ(input_days("persistence", 168), "-");
    EXPECT_EQ(input_days("lstm", 168), "7");
    EXPECT_EQ(input_days("transformer", 336), "14");
    EXPECT_EQ(input_days("mlp", 36), "1.5");
}

TEST(Convert, WritesCanonicalCsvAndSidecar) {
    TempDir dir;
    // two days of quarter-hour readings with decimal commas
    std::string raw = "timestamp;A;B\n";
    HourStamp t = HourStamp::from_civil(2012, 1, 1, 0);
    for (int q = 0; q < 48 * 4; ++q) {
        const auto stamp = (t + (q / 4)).iso();
        raw += stamp.substr(0, 11) + stamp.substr(11, 2) + ":" + std::to_string(q % 4 * 15 / 10) + std::to_string(q % 4 * 15 % 10) +
               ":00;1,0;2,5\n";
    }
    write_file(dir / "raw.csv", raw);
    const auto side = cmd_convert({dir / "raw.csv"}, SourceFormat::WideCsv, dir / "out" / "hourly.csv");
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "hourly.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "hourly.json"));
    EXPECT_EQ(side["clients"].size(), 2u);
    EXPECT_EQ(side["hours"].get<std::size_t>(), 48u);
    const auto back = load_hourly_csv(dir / "out" / "hourly.csv", Region::Custom);
    EXPECT_EQ(back.hours, 48u);
    EXPECT_EQ(back.at(10, 1), 10.0);
    EXPECT_EQ(dataset_hash(back), side["dataset_hash"].get<std::string>());
}
