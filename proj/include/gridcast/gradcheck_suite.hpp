#pragma once

#include "gridcast/autodiff.hpp"
#include "gridcast/models.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace gridcast {

/// Worst finite-difference disagreement of one op or model over all random instances.
struct GradCheckSummary {
    std::string name;
    std::size_t instances = 0;
    std::size_t coordinates = 0;
    double worst_relative_error = 0.0;
    std::string worst_parameter;
    bool passed = true;
};

namespace detail {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = u(rng);
    return t;
}

/// Values bounded away from zero, so ReLU kinks stay outside the difference stencil.
inline Tensor away_from_zero(std::mt19937_64& rng, Shape shape) {
    Tensor t = random_tensor(rng, std::move(shape), 0.1, 1.0);
    std::bernoulli_distribution neg(0.5);
    for (auto& v : t.data())
        if (neg(rng)) v = -v;
    return t;
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Scalar probe sum(y * R) with a fixed random R, so every output coordinate carries weight.
inline Var probe(const Var& y, const Tensor& weights) { return sum(mul(y, y.tape().constant(weights))); }

struct OpCase {
    std::string name;
    bool training = false;
    // Builds parameters and the scalar function for one random instance.
    std::function<void(std::mt19937_64&, std::vector<std::unique_ptr<Parameter>>&, std::function<Var(Tape&)>&)> build;
};

inline std::vector<OpCase> op_cases() {
    using Params = std::vector<std::unique_ptr<Parameter>>;
    using Fn = std::function<Var(Tape&)>;
    auto mk = [](Params& ps, std::string name, Tensor t) -> Parameter& {
        ps.push_back(std::make_unique<Parameter>(std::move(name), std::move(t)));
        return *ps.back();
    };
    std::vector<OpCase> cases;
    auto unary_case = [&](std::string name, std::function<Var(const Var&)> op, bool kinked = false) {
        cases.push_back({name, false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                             const Shape s{pick(rng, 1, 3), pick(rng, 2, 5)};
                             auto& x = mk(ps, "x", kinked ? away_from_zero(rng, s) : random_tensor(rng, s, -2.0, 2.0));
                             Tape scratch;
                             Tensor w = random_tensor(rng, op(scratch.constant(x.value)).value().shape());
                             f = [&x, w, op](Tape& t) { return probe(op(t.param(x)), w); };
                         }});
    };
    auto binary_case = [&](std::string name, std::function<Var(const Var&, const Var&)> op) {
        cases.push_back({name, false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                             const Shape s{pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
                             // Second operand is either full-shape or a broadcast suffix.
                             const Shape sb = pick(rng, 0, 1) ? s : Shape{s[2]};
                             auto& a = mk(ps, "a", random_tensor(rng, s));
                             auto& b = mk(ps, "b", random_tensor(rng, sb));
                             Tensor w = random_tensor(rng, s);
                             f = [&a, &b, w, op](Tape& t) { return probe(op(t.param(a), t.param(b)), w); };
                         }});
    };
    binary_case("add", [](const Var& a, const Var& b) { return add(a, b); });
    binary_case("sub", [](const Var& a, const Var& b) { return sub(a, b); });
    binary_case("mul", [](const Var& a, const Var& b) { return mul(a, b); });
    unary_case("scale", [](const Var& x) { return scale(x, -1.7); });
    unary_case("relu", [](const Var& x) { return relu(x); }, true);
    unary_case("sigmoid", [](const Var& x) { return sigmoid(x); });
    unary_case("tanh", [](const Var& x) { return tanh(x); });
    unary_case("softmax", [](const Var& x) { return softmax(x); });
    unary_case("transpose", [](const Var& x) { return transpose(x); });
    unary_case("reshape", [](const Var& x) { return reshape(x, {x.value().size()}); });
    unary_case("sum", [](const Var& x) { return sum(x); });
    unary_case("mean", [](const Var& x) { return mean(x); });
    cases.push_back({"log", false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                         auto& x = mk(ps, "x", random_tensor(rng, {pick(rng, 1, 3), pick(rng, 2, 5)}, 0.2, 3.0));
                         Tensor w = random_tensor(rng, x.value.shape());
                         f = [&x, w](Tape& t) { return probe(log(t.param(x)), w); };
                     }});
    cases.push_back({"matmul_shared", false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                         const std::size_t B = pick(rng, 1, 3), m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
                         auto& a = mk(ps, "a", random_tensor(rng, {B, m, k}));
                         auto& b = mk(ps, "b", random_tensor(rng, {k, n}));
                         Tensor w = random_tensor(rng, {B, m, n});
                         f = [&a, &b, w](Tape& t) { return probe(matmul(t.param(a), t.param(b)), w); };
                     }});
    cases.push_back({"matmul_batched", false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                         const std::size_t B = pick(rng, 1, 3), m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
                         auto& a = mk(ps, "a", random_tensor(rng, {B, m, k}));
                         auto& b = mk(ps, "b", random_tensor(rng, {B, k, n}));
                         Tensor w = random_tensor(rng, {B, m, n});
                         f = [&a, &b, w](Tape& t) { return probe(matmul(t.param(a), t.param(b)), w); };
                     }});
    cases.push_back({"slice", false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                         const Shape s{pick(rng, 2, 3), pick(rng, 2, 6), pick(rng, 2, 6)};
                         const std::size_t axis = pick(rng, 0, 2);
                         const std::size_t begin = pick(rng, 0, s[axis] - 1), end = pick(rng, begin + 1, s[axis]);
                         auto& x = mk(ps, "x", random_tensor(rng, s));
                         Shape so = s;
                         so[axis] = end - begin;
                         Tensor w = random_tensor(rng, so);
                         f = [&x, w, axis, begin, end](Tape& t) { return probe(slice(t.param(x), axis, begin, end), w); };
                     }});
    cases.push_back({"concat", false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                         const std::size_t r = pick(rng, 1, 4), c1 = pick(rng, 1, 3), c2 = pick(rng, 1, 3);
                         auto& a = mk(ps, "a", random_tensor(rng, {r, c1}));
                         auto& b = mk(ps, "b", random_tensor(rng, {r, c2}));
                         Tensor w = random_tensor(rng, {r, c1 + c2 + c1});
                         f = [&a, &b, w](Tape& t) {
                             Var va = t.param(a);
                             return probe(concat({va, t.param(b), va}), w);
                         };
                     }});
    cases.push_back({"masked_softmax", false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                         const std::size_t n = pick(rng, 2, 5);
                         auto& x = mk(ps, "x", random_tensor(rng, {pick(rng, 1, 2), n, n}, -2.0, 2.0));
                         Tensor w = random_tensor(rng, x.value.shape());
                         Tensor mask = causal_mask(n);
                         f = [&x, w, mask](Tape& t) { return probe(softmax(add(t.param(x), t.constant(mask))), w); };
                     }});
    cases.push_back({"layer_norm", false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                         const std::size_t r = pick(rng, 1, 4), d = pick(rng, 2, 6);
                         auto& x = mk(ps, "x", random_tensor(rng, {r, d}, -2.0, 2.0));
                         auto& g = mk(ps, "gain", random_tensor(rng, {d}, 0.5, 1.5));
                         auto& b = mk(ps, "shift", random_tensor(rng, {d}));
                         Tensor w = random_tensor(rng, {r, d});
                         f = [&x, &g, &b, w](Tape& t) { return probe(layer_norm(t.param(x), t.param(g), t.param(b)), w); };
                     }});
    cases.push_back({"dropout", true, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                         auto& x = mk(ps, "x", random_tensor(rng, {pick(rng, 2, 4), pick(rng, 2, 6)}));
                         Tensor w = random_tensor(rng, x.value.shape());
                         f = [&x, w](Tape& t) { return probe(dropout(t.param(x), 0.3), w); };
                     }});
    cases.push_back({"mse_loss", false, [=](std::mt19937_64& rng, Params& ps, Fn& f) {
                         const Shape s{pick(rng, 1, 3), pick(rng, 2, 5)};
                         auto& p = mk(ps, "pred", random_tensor(rng, s));
                         auto& y = mk(ps, "target", random_tensor(rng, s));
                         f = [&p, &y](Tape& t) { return mse_loss(t.param(p), t.param(y)); };
                     }});
    return cases;
}

/// Small random configuration of a model family with a random batch.
inline ModelSpec tiny_spec(Family family, std::mt19937_64& rng) {
    ModelSpec s;
    s.family = family;
    s.strategy.kind = family == Family::Mlp ? StrategyKind::Global
                                            : (pick(rng, 0, 1) ? StrategyKind::Multivariate : StrategyKind::Global);
    s.clients = s.strategy.multivariate() ? 2 : 1;
    s.strategy.lookback = pick(rng, 4, 6);
    s.strategy.horizon = pick(rng, 2, 3);
    s.mlp_lags = 3;
    s.mlp_hidden = 6;
    s.lstm_units = 3;
    s.lstm_layers = 2;
    s.d_model = 8;
    s.heads = 2;
    s.layers = 1;
    s.ff_dim = 12;
    s.dropout = 0.0;
    s.causal_decoder = pick(rng, 0, 1) == 1;
    s.positional = pick(rng, 0, 1) ? PositionalEncoding::Sinusoidal : PositionalEncoding::Learned;
    return s;
}

} // namespace detail

/// Central-difference checks of every differentiable op and of the MLP, LSTM and a tiny
/// Transformer, each on `instances` seeded random instances. Coordinates whose gradient is
/// exactly zero (attention key biases) only carry difference round-off, hence the 1e-5 floor.
inline std::vector<GradCheckSummary> run_grad_check_suite(std::size_t instances = 20, std::uint64_t seed = 1,
                                                          double tolerance = 1e-4, double eps = 1e-5,
                                                          double floor = 1e-5) {
    std::vector<GradCheckSummary> out;
    auto fold = [](GradCheckSummary& s, const GradCheckReport& r) {
        ++s.instances;
        s.coordinates += r.checked;
        if (r.worst_relative_error >= s.worst_relative_error) {
            s.worst_relative_error = r.worst_relative_error;
            s.worst_parameter = r.worst_parameter;
        }
        s.passed = s.passed && r.passed;
    };
    for (const auto& c : detail::op_cases()) {
        GradCheckSummary s;
        s.name = c.name;
        for (std::size_t i = 0; i < instances; ++i) {
            std::mt19937_64 rng(seed * 7919 + i);
            std::vector<std::unique_ptr<Parameter>> owned;
            std::function<Var(Tape&)> f;
            c.build(rng, owned, f);
            std::vector<Parameter*> params;
            for (auto& p : owned) params.push_back(p.get());
            GradCheckOptions opt;
            opt.tolerance = tolerance;
            opt.eps = eps;
            opt.floor = floor;
            opt.training = c.training;
            opt.tape_seed = seed + i;
            fold(s, grad_check(f, params, opt));
        }
        out.push_back(s);
    }
    for (Family fam : {Family::Mlp, Family::Lstm, Family::Transformer}) {
        GradCheckSummary s;
        s.name = std::string("model_") + to_string(fam);
        for (std::size_t i = 0; i < instances; ++i) {
            std::mt19937_64 rng(seed * 104729 + i);
            const ModelSpec spec = detail::tiny_spec(fam, rng);
            auto model = make_neural_model(spec, seed + i);
            const std::size_t B = detail::pick(rng, 1, 2);
            const Tensor enc = detail::random_tensor(rng, {B, spec.lookback(), spec.d_in()});
            const Tensor dec = detail::random_tensor(rng, {B, spec.horizon(), spec.d_in()});
            const Tensor target = detail::random_tensor(rng, {B, spec.horizon(), spec.d_out()});
            auto f = [&](Tape& t) { return mse_loss(model->forward(t, enc, dec), t.constant(target)); };
            GradCheckOptions opt;
            opt.tolerance = tolerance;
            opt.eps = eps;
            opt.floor = floor;
            fold(s, grad_check(f, model->parameters(), opt));
        }
        out.push_back(s);
    }
    return out;
}

} // namespace gridcast
