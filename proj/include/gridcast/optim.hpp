#pragma once

#include "gridcast/autodiff.hpp"
#include "gridcast/error.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace gridcast {

enum class Schedule {
    /// Cosine decay to zero within each epoch; the cycle peak shrinks by gamma every epoch.
    EpochCosine,
    /// One cosine from the end of warmup to max_epochs * steps_per_epoch; gamma unused.
    SingleCosine,
    /// Piecewise constant, multiplied by gamma after every epoch.
    StepDecay,
    Constant,
};

inline const char* to_string(Schedule s) {
    switch (s) {
    case Schedule::EpochCosine: return "epoch_cosine";
    case Schedule::SingleCosine: return "single_cosine";
    case Schedule::StepDecay: return "step";
    case Schedule::Constant: return "constant";
    }
    return "?";
}

inline Schedule schedule_from_string(std::string_view s) {
    if (s == "epoch_cosine" || s == "cosine") return Schedule::EpochCosine;
    if (s == "single_cosine") return Schedule::SingleCosine;
    if (s == "step") return Schedule::StepDecay;
    if (s == "constant") return Schedule::Constant;
    throw Error(ErrorCode::InvalidArgument, "unknown schedule '" + std::string(s) + "'");
}

struct TrainConfig {
    std::size_t batch_size = 128;
    double base_lr = 1e-4;
    std::size_t warmup_steps = 1000;
    double decay_gamma = 0.8;
    Schedule schedule = Schedule::EpochCosine;
    std::size_t eval_interval_steps = 10000;
    std::size_t patience_evals = 10;
    std::size_t max_epochs = 100;
    /// Hard cap on optimizer steps; 0 means no cap.
    std::size_t max_steps = 0;
    std::uint64_t seed = 0;
    double weight_decay = 0.01;
    /// Global gradient-norm clip; 0 disables clipping.
    double clip_norm = 0.0;
    /// Batches in one epoch. Filled in by train() from the sample count.
    std::size_t steps_per_epoch = 1;
    /// Form Global batches from one client at a time.
    bool segregate_clients = false;
    std::size_t eval_batch_size = 256;
    /// Validation subsample (evenly strided); 0 uses every validation sample.
    std::size_t max_val_samples = 0;
    /// Parallel client models for the Local strategy.
    std::size_t workers = 1;
};

/// Learning rate before optimizer step `step` (0-based).
inline double lr_at(std::size_t step, const TrainConfig& cfg) {
    if (step < cfg.warmup_steps) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    const std::size_t s = step - cfg.warmup_steps;
    const std::size_t spe = std::max<std::size_t>(cfg.steps_per_epoch, 1);
    switch (cfg.schedule) {
    case Schedule::Constant: return cfg.base_lr;
    case Schedule::StepDecay: return cfg.base_lr * std::pow(cfg.decay_gamma, static_cast<double>(s / spe));
    case Schedule::EpochCosine: {
        const double peak = cfg.base_lr * std::pow(cfg.decay_gamma, static_cast<double>(s / spe));
        const double phase = static_cast<double>(s % spe) / static_cast<double>(spe);
        return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
    }
    case Schedule::SingleCosine: {
        const std::size_t total = cfg.max_epochs * spe;
        const std::size_t span = total > cfg.warmup_steps ? total - cfg.warmup_steps : 1;
        const double phase = static_cast<double>(std::min(s, span)) / static_cast<double>(span);
        return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
    }
    }
    return cfg.base_lr;
}

struct AdamWState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Decoupled weight decay followed by a bias-corrected Adam update.
inline void adamw_step(std::span<Parameter* const> params, AdamWState& state, double lr, double weight_decay) {
    for (auto* p : params)
        for (double g : p->grad.data())
            if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "parameter " + p->name);
    if (state.m.empty()) {
        for (auto* p : params) {
            state.m.emplace_back(p->value.shape());
            state.v.emplace_back(p->value.shape());
        }
    }
    if (state.m.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
    ++state.step;
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k]->value.data();
        auto g = params[k]->grad.data();
        auto m = state.m[k].data();
        auto v = state.v[k].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] -= lr * weight_decay * w[i];
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
        }
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`. Returns the norm before clipping.
inline double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
    double sq = 0.0;
    for (auto* p : params)
        for (double g : p->grad.data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto* p : params)
            for (double& g : p->grad.data()) g *= s;
    }
    return norm;
}

} // namespace gridcast
