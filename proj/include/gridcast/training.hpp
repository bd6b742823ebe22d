#pragma once

#include "gridcast/autodiff.hpp"
#include "gridcast/models.hpp"
#include "gridcast/optim.hpp"
#include "gridcast/windowing.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace gridcast {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Seed of a Local client model: distinct per client, reproducible per master seed.
inline std::uint64_t client_seed(std::uint64_t master, std::string_view client_id) {
    return splitmix64(master ^ fnv1a(client_id));
}

/// Counts consecutive non-improving evaluations.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

    /// Returns true when `loss` is a new best.
    bool update(double loss) {
        ++evaluations_;
        if (loss < best_) {
            best_ = loss;
            best_evaluation_ = evaluations_;
            since_best_ = 0;
            return true;
        }
        ++since_best_;
        return false;
    }

    bool should_stop() const { return patience_ > 0 && since_best_ >= patience_; }
    double best() const { return best_; }
    /// 1-based index of the best evaluation.
    std::size_t best_evaluation() const { return best_evaluation_; }
    std::size_t evaluations() const { return evaluations_; }

private:
    std::size_t patience_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t best_evaluation_ = 0;
    std::size_t since_best_ = 0;
    std::size_t evaluations_ = 0;
};

struct EvalRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean over steps since the previous evaluation
    double val_loss = 0.0;
    bool improved = false;
};

struct TrainHistory {
    std::vector<EvalRecord> evals;
    std::size_t steps = 0;
    std::size_t epochs = 0;
    std::size_t best_step = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    bool early_stopped = false;
    double seconds = 0.0;
};

struct TrainedModel {
    std::unique_ptr<NeuralModel> model;
    std::uint64_t seed = 0;
    std::string client_id;
    TrainHistory history;
};

/// Mean squared error of a model over samples, evaluated in inference mode in a fixed order.
inline double evaluate_loss(NeuralModel& model, std::span<const SampleRef> samples, const WindowSource& src,
                            std::size_t batch_size = 256) {
    if (samples.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no evaluation samples");
    double sse = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < samples.size(); i += batch_size) {
        auto chunk = samples.subspan(i, std::min(batch_size, samples.size() - i));
        Batch b = make_batch(chunk, model.spec().strategy, src);
        Tensor pred = predict(model, b);
        for (std::size_t k = 0; k < pred.size(); ++k) sse += (pred[k] - b.target[k]) * (pred[k] - b.target[k]);
        n += pred.size();
    }
    return sse / static_cast<double>(n);
}

namespace detail {

inline std::vector<SampleRef> strided_subset(std::span<const SampleRef> samples, std::size_t max) {
    if (max == 0 || samples.size() <= max) return {samples.begin(), samples.end()};
    std::vector<SampleRef> out;
    out.reserve(max);
    for (std::size_t k = 0; k < max; ++k) out.push_back(samples[k * samples.size() / max]);
    return out;
}

inline std::vector<std::vector<SampleRef>> epoch_batches(std::span<const SampleRef> samples, const TrainConfig& cfg,
                                                         std::uint64_t seed) {
    if (!cfg.segregate_clients) return shuffle_batches(samples, cfg.batch_size, seed);
    std::vector<std::vector<SampleRef>> by_client;
    for (const auto& s : samples) {
        const std::size_t c = s.client == kAllClients ? 0 : s.client;
        if (by_client.size() <= c) by_client.resize(c + 1);
        by_client[c].push_back(s);
    }
    std::vector<std::vector<SampleRef>> batches;
    for (std::size_t c = 0; c < by_client.size(); ++c) {
        auto part = shuffle_batches(by_client[c], cfg.batch_size, splitmix64(seed + c));
        batches.insert(batches.end(), part.begin(), part.end());
    }
    std::mt19937_64 rng(seed);
    std::shuffle(batches.begin(), batches.end(), rng);
    return batches;
}

} // namespace detail

/// MSE training with AdamW, periodic validation and early stopping. The returned model holds the
/// parameters of the best validation evaluation.
inline TrainedModel train(std::unique_ptr<NeuralModel> model, std::span<const SampleRef> train_samples,
                          std::span<const SampleRef> val_samples, const WindowSource& src, TrainConfig cfg,
                          std::uint64_t seed) {
    if (train_samples.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training samples");
    if (val_samples.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no validation samples");
    const auto started = std::chrono::steady_clock::now();
    cfg.steps_per_epoch = (train_samples.size() + cfg.batch_size - 1) / cfg.batch_size;
    const auto val = detail::strided_subset(val_samples, cfg.max_val_samples);
    const auto params = model->parameters();
    const StrategySpec& strategy = model->spec().strategy;

    TrainedModel result;
    result.seed = seed;
    AdamWState opt;
    EarlyStopper stopper(cfg.patience_evals);
    std::vector<Tensor> best = model->snapshot();
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::size_t step = 0;
    std::size_t last_eval_step = std::numeric_limits<std::size_t>::max();
    bool stop = false;

    auto evaluate = [&](std::size_t epoch) {
        last_eval_step = step;
        EvalRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        rec.val_loss = evaluate_loss(*model, val, src, cfg.eval_batch_size);
        if (!std::isfinite(rec.val_loss)) throw Error(ErrorCode::Diverged, "validation loss is not finite at step " + std::to_string(step));
        rec.improved = stopper.update(rec.val_loss);
        if (rec.improved) {
            best = model->snapshot();
            result.history.best_step = step;
            result.history.best_val_loss = rec.val_loss;
        }
        result.history.evals.push_back(rec);
        loss_sum = 0.0;
        loss_count = 0;
        if (stopper.should_stop()) {
            result.history.early_stopped = true;
            stop = true;
        }
    };

    for (std::size_t epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
        auto batches = detail::epoch_batches(train_samples, cfg, splitmix64(seed ^ (epoch + 1)));
        for (const auto& refs : batches) {
            Batch b = make_batch(refs, strategy, src);
            for (auto* p : params) p->zero_grad();
            Tape tape(TapeOptions{.training = true, .record_grad = true, .seed = splitmix64(seed + step)});
            Var pred = model->forward(tape, b.encoder, b.decoder);
            Var loss = mse_loss(pred, tape.constant(std::move(b.target)));
            const double lv = loss.value().item();
            if (!std::isfinite(lv)) throw Error(ErrorCode::Diverged, "training loss is not finite at step " + std::to_string(step));
            tape.backward(loss);
            if (cfg.clip_norm > 0.0) clip_grad_norm(params, cfg.clip_norm);
            adamw_step(params, opt, lr_at(step, cfg), cfg.weight_decay);
            ++step;
            loss_sum += lv;
            ++loss_count;
            if (cfg.eval_interval_steps && step % cfg.eval_interval_steps == 0) evaluate(epoch);
            if (stop || (cfg.max_steps && step >= cfg.max_steps)) {
                stop = true;
                break;
            }
        }
        if (last_eval_step != step) evaluate(epoch);
        result.history.epochs = epoch + 1;
    }
    model->restore(best);
    result.history.steps = step;
    result.history.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.model = std::move(model);
    return result;
}

/// Result of fitting one batch repeatedly; used as a memorization check.
struct MemorizeResult {
    std::size_t steps = 0;
    double final_loss = 0.0;
    std::vector<double> losses;
};

inline MemorizeResult memorize(NeuralModel& model, const Batch& batch, const TrainConfig& cfg, std::size_t max_steps,
                               double target_loss) {
    MemorizeResult r;
    AdamWState opt;
    const auto params = model.parameters();
    for (std::size_t step = 0; step < max_steps; ++step) {
        for (auto* p : params) p->zero_grad();
        Tape tape(TapeOptions{.training = true, .record_grad = true, .seed = splitmix64(cfg.seed + step)});
        Var loss = mse_loss(model.forward(tape, batch.encoder, batch.decoder), tape.constant(batch.target));
        r.final_loss = loss.value().item();
        r.losses.push_back(r.final_loss);
        r.steps = step;
        if (r.final_loss < target_loss) return r;
        tape.backward(loss);
        adamw_step(params, opt, lr_at(step, cfg), cfg.weight_decay);
    }
    r.steps = max_steps;
    return r;
}

struct StrategyRun {
    std::vector<TrainedModel> models;  // one per client for Local, otherwise one
    std::vector<std::string> failures;
    std::size_t train_samples = 0;
    std::size_t val_samples = 0;
    double seconds = 0.0;
};

/// Trains the model(s) a strategy needs. Local runs train one model per client on up to
/// cfg.workers threads; results are stored in client order and failures do not stop the rest.
inline StrategyRun run_strategy(const ModelSpec& spec, const WindowSource& src, const TrainConfig& cfg,
                                const std::function<void(const std::string&)>& log = {}) {
    const auto started = std::chrono::steady_clock::now();
    const SampleSet train_set = enumerate_samples(spec.strategy, SplitPart::Train, src.data);
    const SampleSet val_set = enumerate_samples(spec.strategy, SplitPart::Val, src.data);
    StrategyRun run;
    run.train_samples = train_set.count();
    run.val_samples = val_set.count();
    run.models.resize(train_set.groups.size());
    std::vector<std::string> errors(train_set.groups.size());
    const bool local = spec.strategy.kind == StrategyKind::Local;

    auto train_group = [&](std::size_t g) {
        const std::string id = local ? src.data.data.client_ids[g] : std::string("all");
        const std::uint64_t seed = local ? client_seed(cfg.seed, id) : cfg.seed;
        try {
            run.models[g] = train(make_neural_model(spec, seed), train_set.groups[g], val_set.groups[g], src, cfg, seed);
            run.models[g].client_id = id;
        } catch (const Error& e) {
            errors[g] = id + ": " + e.what();
        }
        if (log) log(id + (errors[g].empty() ? " trained" : " failed"));
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, train_set.groups.size()));
    if (workers == 1) {
        for (std::size_t g = 0; g < train_set.groups.size(); ++g) train_group(g);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t g = next++; g < train_set.groups.size(); g = next++) train_group(g);
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (!e.empty()) run.failures.push_back(e);
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return run;
}

} // namespace gridcast
