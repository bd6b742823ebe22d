#include <gridcast.hpp>

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace {

using namespace gridcast;

int run_command(const std::filesystem::path& config_path, const RunOptions& opt) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    const RunSummary summary = cmd_run(cfg, opt);
    std::size_t completed = 0, skipped = 0, failed = 0;
    std::cout << "run summary (" << summary.output.string() << ")\n";
    for (const auto& o : summary.outcomes) {
        std::cout << "  " << std::left << std::setw(48) << o.id << ' ' << to_string(o.status);
        if (o.status == RunOutcome::Status::Failed) {
            std::cout << "  " << o.error;
            ++failed;
        } else {
            std::cout << "  mae=" << format_fixed(o.result.mae, 4) << " mse=" << format_fixed(o.result.mse, 4);
            (o.status == RunOutcome::Status::Skipped ? skipped : completed)++;
        }
        std::cout << '\n';
    }
    std::cout << completed << " completed, " << skipped << " skipped, " << failed << " failed\n";
    return summary.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Load forecasting benchmark: data conversion, baselines, neural models and result tables"};
    app.set_version_flag("--version", std::string(GRIDCAST_VERSION));
    app.require_subcommand(1);
    app.footer("Environment:\n  GRIDCAST_DATA_DIR  root for relative dataset paths in configs");

    // convert
    auto* convert = app.add_subcommand("convert", "Convert a raw source file into the canonical hourly wide CSV plus a JSON sidecar");
    std::vector<std::filesystem::path> conv_in;
    std::filesystem::path conv_out;
    std::string conv_format = "wide", conv_region = "custom", conv_start;
    convert->add_option("--input", conv_in, "Raw source file; repeat for consecutive periods of the same clients")
        ->required()
        ->check(CLI::ExistingFile);
    convert->add_option("--format", conv_format, "Source layout: wide (timestamp + client columns), ausgrid (half-hour rows) "
                                                 "or matrix (headerless hourly values)")
        ->check(CLI::IsMember({"wide", "ausgrid", "matrix"}))
        ->capture_default_str();
    convert->add_option("--start", conv_start, "Timestamp of the first row for --format matrix, e.g. \"2012-01-01 00:00\"");
    convert->add_option("--output", conv_out, "Canonical CSV to write; the sidecar uses the same stem with .json")->required();
    convert->add_option("--region", conv_region, "Calendar region tag (portugal, new_south_wales, custom)")->capture_default_str();

    // run
    auto* run = app.add_subcommand("run", "Execute every (family, strategy, horizon) tuple of an experiment config");
    std::filesystem::path run_config;
    RunOptions opt;
    opt.log = &std::cerr;
    run->add_option("config", run_config, "Experiment config (.ini or .json)")->required()->check(CLI::ExistingFile);
    run->add_option("--output", opt.output, "Override the output directory");
    run->add_option("--holiday-file", opt.holiday_file, "Holiday CSV (date,name) replacing the bundled calendar");
    run->add_option("--workers", opt.workers, "Parallel worker slots");
    run->add_option("--seed", opt.seed, "Master seed");
    run->add_option("--max-epochs", opt.max_epochs, "Cap on training epochs");
    run->add_option("--eval-interval", opt.eval_interval, "Validation interval in optimizer steps");
    run->add_option("--clip-norm", opt.clip_norm, "Clip gradients to this global L2 norm (0 disables)");
    run->add_flag("--causal-decoder", opt.causal_decoder, "Apply a causal mask in decoder self-attention");
    run->add_flag("--force", opt.force, "Re-execute tuples that already have a completed manifest");
    bool quiet = false;
    run->add_flag("--quiet", quiet, "Suppress progress logging on stderr");

    // report
    auto* report = app.add_subcommand("report", "Render MAE and MSE tables from a results directory");
    std::filesystem::path report_dir;
    std::optional<std::filesystem::path> reference;
    report->add_option("results_dir", report_dir, "Directory containing results.csv")->required();
    report->add_option("--reference", reference, "Reference results CSV merged into the tables");

    // schedule-dump
    auto* sched = app.add_subcommand("schedule-dump", "Print the learning rate for each step as CSV");
    TrainConfig tc;
    std::string schedule = to_string(tc.schedule);
    std::size_t steps = 5000, steps_per_epoch = 1000;
    sched->add_option("--steps", steps, "Last step to print")->capture_default_str();
    sched->add_option("--steps-per-epoch", steps_per_epoch, "Optimizer steps per epoch")->capture_default_str();
    sched->add_option("--base-lr", tc.base_lr, "Peak learning rate")->capture_default_str();
    sched->add_option("--warmup", tc.warmup_steps, "Linear warmup steps")->capture_default_str();
    sched->add_option("--gamma", tc.decay_gamma, "Per-epoch decay factor")->capture_default_str();
    sched->add_option("--max-epochs", tc.max_epochs, "Epoch budget (single_cosine span)")->capture_default_str();
    sched->add_option("--schedule", schedule, "epoch_cosine, single_cosine, step or constant")->capture_default_str();

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "Central finite-difference check of every op and model family");
    std::size_t gc_instances = 20;
    std::uint64_t gc_seed = 1;
    gc->add_option("--instances", gc_instances, "Random instances per case")->capture_default_str();
    gc->add_option("--seed", gc_seed, "Seed for the random instances")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*convert) {
            std::optional<HourStamp> start;
            if (conv_format == "matrix") {
                auto m = parse_timestamp(conv_start);
                if (!m || *m % 60 != 0) throw Error(ErrorCode::InvalidArgument, "--format matrix needs an hourly --start timestamp");
                start = HourStamp(*m / 60);
            }
            const auto side = cmd_convert(conv_in, conv_format == "ausgrid" ? SourceFormat::AusgridLong : SourceFormat::WideCsv,
                                          conv_out, region_from_string(conv_region), start);
            std::cout << "wrote " << conv_out.string() << ": " << side["clients"].size() << " clients, " << side["hours"].get<std::size_t>()
                      << " hours, " << side["dropped"].size() << " dropped\n";
            for (const auto& d : side["dropped"])
                std::cout << "  dropped " << d["client"].get<std::string>() << ": " << d["reason"].get<std::string>() << '\n';
            return 0;
        }
        if (*run) {
            if (quiet) opt.log = nullptr;
            return run_command(run_config, opt);
        }
        if (*report) {
            const ReportFiles files = cmd_report(report_dir, reference);
            std::cout << "MAE\n" << files.mae_markdown << "\nMSE\n" << files.mse_markdown;
            return 0;
        }
        if (*sched) {
            tc.schedule = schedule_from_string(schedule);
            std::cout << cmd_schedule_dump(tc, steps, steps_per_epoch);
            return 0;
        }
        if (*gc) {
            bool ok = true;
            for (const auto& s : run_grad_check_suite(gc_instances, gc_seed)) {
                std::cout << std::left << std::setw(20) << s.name << " instances=" << s.instances << " coords=" << s.coordinates
                          << " worst=" << std::scientific << std::setprecision(2) << s.worst_relative_error << std::defaultfloat
                          << (s.worst_parameter.empty() ? "" : " (" + s.worst_parameter + ")") << (s.passed ? " ok" : " FAIL") << '\n';
                ok = ok && s.passed;
            }
            return ok ? 0 : 1;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
