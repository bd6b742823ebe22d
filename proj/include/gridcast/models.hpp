#pragma once

#include "gridcast/autodiff.hpp"
#include "gridcast/calendar.hpp"
#include "gridcast/error.hpp"
#include "gridcast/windowing.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gridcast {

enum class Family { Persistence, LinReg, Mlp, Lstm, Transformer };

inline const char* to_string(Family f) {
    switch (f) {
    case Family::Persistence: return "persistence";
    case Family::LinReg: return "linreg";
    case Family::Mlp: return "mlp";
    case Family::Lstm: return "lstm";
    case Family::Transformer: return "transformer";
    }
    return "?";
}

inline const char* display_name(Family f) {
    switch (f) {
    case Family::Persistence: return "Persistence";
    case Family::LinReg: return "Linear regression";
    case Family::Mlp: return "MLP";
    case Family::Lstm: return "LSTM";
    case Family::Transformer: return "Transformer";
    }
    return "?";
}

inline std::optional<Family> family_from_string(std::string_view s) {
    if (s == "persistence") return Family::Persistence;
    if (s == "linreg" || s == "linear_regression") return Family::LinReg;
    if (s == "mlp") return Family::Mlp;
    if (s == "lstm") return Family::Lstm;
    if (s == "transformer") return Family::Transformer;
    return std::nullopt;
}

enum class PositionalEncoding { None, Sinusoidal, Learned };

inline const char* to_string(PositionalEncoding p) {
    switch (p) {
    case PositionalEncoding::None: return "none";
    case PositionalEncoding::Sinusoidal: return "sinusoidal";
    case PositionalEncoding::Learned: return "learned";
    }
    return "?";
}

inline PositionalEncoding positional_from_string(std::string_view s) {
    if (s == "none") return PositionalEncoding::None;
    if (s == "sinusoidal") return PositionalEncoding::Sinusoidal;
    if (s == "learned") return PositionalEncoding::Learned;
    throw Error(ErrorCode::InvalidArgument, "unknown positional encoding '" + std::string(s) + "'");
}

/// Architecture hyperparameters. Input/output widths follow from the strategy and client count.
struct ModelSpec {
    Family family = Family::Transformer;
    StrategySpec strategy;
    std::size_t clients = 1;

    // Transformer
    std::size_t d_model = 128;
    std::size_t layers = 3;
    std::size_t heads = 8;
    std::size_t ff_dim = 512;
    double dropout = 0.1;
    bool causal_decoder = false;
    PositionalEncoding positional = PositionalEncoding::Sinusoidal;

    // MLP
    std::size_t mlp_hidden = 1024;
    std::size_t mlp_lags = 168;

    // LSTM
    std::size_t lstm_units = 20;
    std::size_t lstm_layers = 2;

    // Linear regression
    std::size_t linreg_lags = 336;
    double ridge = 1e-6;

    // Persistence; 0 picks one week for h <= 168 and one month (720 h) otherwise.
    std::size_t persistence_lag = 0;

    std::size_t d_in() const { return strategy.d_in(clients); }
    std::size_t d_out() const { return strategy.d_out(clients); }
    std::size_t horizon() const { return strategy.horizon; }
    std::size_t lookback() const { return strategy.lookback; }
};

inline std::size_t default_persistence_lag(std::size_t horizon) {
    if (horizon <= 168) return 168;
    return std::max<std::size_t>(720, horizon);
}

inline nlohmann::json to_json(const ModelSpec& s) {
    return {{"family", to_string(s.family)},
            {"strategy", to_string(s.strategy.kind)},
            {"lookback", s.strategy.lookback},
            {"horizon", s.strategy.horizon},
            {"clients", s.clients},
            {"d_model", s.d_model},
            {"layers", s.layers},
            {"heads", s.heads},
            {"ff_dim", s.ff_dim},
            {"dropout", s.dropout},
            {"causal_decoder", s.causal_decoder},
            {"positional", to_string(s.positional)},
            {"mlp_hidden", s.mlp_hidden},
            {"mlp_lags", s.mlp_lags},
            {"lstm_units", s.lstm_units},
            {"lstm_layers", s.lstm_layers},
            {"linreg_lags", s.linreg_lags},
            {"ridge", s.ridge},
            {"persistence_lag", s.persistence_lag}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    auto fam = family_from_string(j.at("family").get<std::string>());
    if (!fam) throw Error(ErrorCode::BadCheckpoint, "unknown family in manifest");
    s.family = *fam;
    s.strategy.kind = strategy_from_string(j.at("strategy").get<std::string>());
    s.strategy.lookback = j.at("lookback");
    s.strategy.horizon = j.at("horizon");
    s.clients = j.at("clients");
    s.d_model = j.at("d_model");
    s.layers = j.at("layers");
    s.heads = j.at("heads");
    s.ff_dim = j.at("ff_dim");
    s.dropout = j.at("dropout");
    s.causal_decoder = j.at("causal_decoder");
    s.positional = positional_from_string(j.at("positional").get<std::string>());
    s.mlp_hidden = j.at("mlp_hidden");
    s.mlp_lags = j.at("mlp_lags");
    s.lstm_units = j.at("lstm_units");
    s.lstm_layers = j.at("lstm_layers");
    s.linreg_lags = j.at("linreg_lags");
    s.ridge = j.at("ridge");
    s.persistence_lag = j.at("persistence_lag");
    return s;
}

// ---------------------------------------------------------------------------------------------
// Closed-form baselines
// ---------------------------------------------------------------------------------------------

/// forecast[i] = series[t + 1 + i - lag].
inline std::vector<double> persistence_forecast(std::span<const double> series, std::size_t t, std::size_t h,
                                                std::size_t lag) {
    if (lag < h) throw Error(ErrorCode::InsufficientHistory, "lag " + std::to_string(lag) + " shorter than horizon " + std::to_string(h));
    if (t + 1 < lag || t >= series.size())
        throw Error(ErrorCode::InsufficientHistory, "origin " + std::to_string(t) + " with lag " + std::to_string(lag));
    std::vector<double> out(h);
    for (std::size_t i = 0; i < h; ++i) out[i] = series[t + 1 + i - lag];
    return out;
}

/// Per-output ridge regression on [load lags, origin-hour calendar features, 1].
class LinRegModel {
public:
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    LinRegModel() = default;
    LinRegModel(std::size_t lags, std::size_t horizon, double ridge) : lags_(lags), horizon_(horizon), ridge_(ridge) {}

    std::size_t lags() const { return lags_; }
    std::size_t horizon() const { return horizon_; }
    std::size_t input_size() const { return lags_ + kCalendarFeatures + 1; }
    const Matrix& weights() const { return weights_; }
    Matrix& weights() { return weights_; }

    /// Writes the regression row of a univariate sample.
    void design_row(double* out, const WindowSource& src, std::uint32_t client, std::size_t origin) const {
        const auto& ds = src.data.data;
        for (std::size_t j = 0; j < lags_; ++j) out[j] = ds.at(origin + 1 - lags_ + j, client);
        const double* f = src.features.row(origin);
        for (std::size_t j = 0; j < kCalendarFeatures; ++j) out[lags_ + j] = f[j];
        out[lags_ + kCalendarFeatures] = 1.0;
    }

    /// Solves (X'X + ridge I) W = X'Y by Cholesky. Rows are accumulated in chunks.
    void fit(std::span<const SampleRef> samples, const WindowSource& src) {
        const std::size_t p = input_size();
        if (samples.size() < p)
            throw Error(ErrorCode::TooFewSamples, std::to_string(samples.size()) + " samples for " + std::to_string(p) + " coefficients");
        Matrix xtx = Matrix::Zero(p, p);
        Matrix xty = Matrix::Zero(p, horizon_);
        constexpr std::size_t chunk = 1024;
        Matrix X(chunk, p), Y(chunk, horizon_);
        for (std::size_t start = 0; start < samples.size(); start += chunk) {
            const std::size_t n = std::min(chunk, samples.size() - start);
            for (std::size_t r = 0; r < n; ++r) {
                const auto& s = samples[start + r];
                if (s.client == kAllClients) throw Error(ErrorCode::InvalidArgument, "linear regression is univariate");
                if (s.origin + 1 < lags_) throw Error(ErrorCode::InsufficientHistory, "origin " + std::to_string(s.origin));
                design_row(X.row(static_cast<Eigen::Index>(r)).data(), src, s.client, s.origin);
                for (std::size_t i = 0; i < horizon_; ++i) Y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = src.data.data.at(s.origin + 1 + i, s.client);
            }
            auto Xn = X.topRows(static_cast<Eigen::Index>(n));
            xtx.selfadjointView<Eigen::Lower>().rankUpdate(Xn.transpose());
            xty.noalias() += Xn.transpose() * Y.topRows(static_cast<Eigen::Index>(n));
        }
        xtx.triangularView<Eigen::StrictlyUpper>() = xtx.transpose();
        xtx.diagonal().array() += ridge_;
        solve(xtx, xty);
    }

    /// Solves the normal equations for already-formed X'X and X'Y.
    void solve(const Matrix& xtx, const Matrix& xty) {
        Eigen::LLT<Matrix> llt(xtx);
        if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14))
            throw Error(ErrorCode::SingularSystem, "normal equations are not positive definite (ridge " + std::to_string(ridge_) + ")");
        weights_ = llt.solve(xty);
    }

    /// Predictions for a batch of univariate samples, row-major [n, h].
    Matrix predict(std::span<const SampleRef> samples, const WindowSource& src) const {
        Matrix X(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(input_size()));
        for (std::size_t r = 0; r < samples.size(); ++r)
            design_row(X.row(static_cast<Eigen::Index>(r)).data(), src, samples[r].client, samples[r].origin);
        return X * weights_;
    }

    std::vector<double> predict_row(std::span<const double> input) const {
        if (input.size() != input_size()) throw Error(ErrorCode::ShapeMismatch, "linreg input has " + std::to_string(input.size()) + " values");
        Eigen::Map<const Eigen::RowVectorXd> x(input.data(), static_cast<Eigen::Index>(input.size()));
        Eigen::RowVectorXd y = x * weights_;
        return {y.data(), y.data() + y.size()};
    }

private:
    std::size_t lags_ = 336;
    std::size_t horizon_ = 24;
    double ridge_ = 1e-6;
    Matrix weights_;
};

// ---------------------------------------------------------------------------------------------
// Neural building blocks
// ---------------------------------------------------------------------------------------------

/// Uniform Glorot initialization, limit sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out, Shape shape) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = u(rng);
    return t;
}

/// Sinusoidal position table [rows, d] starting at position `offset`.
inline Tensor sinusoidal_positions(std::size_t rows, std::size_t d, std::size_t offset = 0) {
    Tensor pe({rows, d});
    for (std::size_t pos = 0; pos < rows; ++pos)
        for (std::size_t i = 0; i < d; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
            const double angle = static_cast<double>(pos + offset) * freq;
            pe[pos * d + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

/// Owns parameters at stable addresses, in registration order.
class ParameterStore {
public:
    Parameter& add(std::string name, Tensor value) {
        params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
        return *params_.back();
    }

    std::vector<Parameter*> parameters() const {
        std::vector<Parameter*> out;
        for (const auto& p : params_) out.push_back(p.get());
        return out;
    }

    Parameter* find(std::string_view name) const {
        for (const auto& p : params_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

struct Linear {
    Parameter* weight = nullptr;  // [in, out]
    Parameter* bias = nullptr;    // [out]

    static Linear create(ParameterStore& store, std::mt19937_64& rng, const std::string& name, std::size_t in,
                         std::size_t out) {
        Linear l;
        l.weight = &store.add(name + ".weight", glorot(rng, in, out, {in, out}));
        l.bias = &store.add(name + ".bias", Tensor({out}));
        return l;
    }

    Var operator()(Tape& tape, const Var& x) const { return add(matmul(x, tape.param(*weight)), tape.param(*bias)); }
};

struct LayerNormParams {
    Parameter* gain = nullptr;
    Parameter* shift = nullptr;

    static LayerNormParams create(ParameterStore& store, const std::string& name, std::size_t d) {
        return {&store.add(name + ".gain", Tensor({d}, 1.0)), &store.add(name + ".shift", Tensor({d}))};
    }

    Var operator()(Tape& tape, const Var& x) const { return layer_norm(x, tape.param(*gain), tape.param(*shift)); }
};

struct AttentionParams {
    Linear query, key, value, out;

    static AttentionParams create(ParameterStore& store, std::mt19937_64& rng, const std::string& name, std::size_t d) {
        return {Linear::create(store, rng, name + ".q", d, d), Linear::create(store, rng, name + ".k", d, d),
                Linear::create(store, rng, name + ".v", d, d), Linear::create(store, rng, name + ".o", d, d)};
    }
};

/// Additive mask [n, n] with -inf above the diagonal.
inline Tensor causal_mask(std::size_t n) {
    Tensor m({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -std::numeric_limits<double>::infinity();
    return m;
}

/// Multi-head scaled dot-product attention of `query_in` [B, Tq, d] over `kv_in` [B, Tk, d].
/// `mask` is an optional additive [Tq, Tk] bias; `weights` receives per-head attention maps.
inline Var multi_head_attention(Tape& tape, const AttentionParams& p, const Var& query_in, const Var& kv_in,
                                std::size_t heads, const Tensor* mask = nullptr, double dropout_rate = 0.0,
                                std::vector<Tensor>* weights = nullptr) {
    const std::size_t d = query_in.value().dim_back(0);
    if (heads == 0 || d % heads != 0)
        throw Error(ErrorCode::HeadDivisibility, "d_model " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Var q = p.query(tape, query_in);
    Var k = p.key(tape, kv_in);
    Var v = p.value(tape, kv_in);
    const std::size_t last = query_in.value().rank() - 1;
    std::optional<Var> mask_var;
    if (mask) mask_var = tape.constant(*mask);
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = heads == 1 ? q : slice(q, last, h * dh, (h + 1) * dh);
        Var kh = heads == 1 ? k : slice(k, last, h * dh, (h + 1) * dh);
        Var vh = heads == 1 ? v : slice(v, last, h * dh, (h + 1) * dh);
        Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        if (mask_var) scores = add(scores, *mask_var);
        Var attn = softmax(scores);
        if (weights) weights->push_back(attn.value());
        outs.push_back(matmul(dropout(attn, dropout_rate), vh));
    }
    Var merged = heads == 1 ? outs.front() : concat(outs);
    return p.out(tape, merged);
}

// ---------------------------------------------------------------------------------------------
// Neural forecasting models
// ---------------------------------------------------------------------------------------------

/// A trainable direct multi-step forecaster: encoder [B, L, d_in] and decoder [B, h, d_in]
/// blocks in, [B, h, d_out] out.
class NeuralModel {
public:
    explicit NeuralModel(ModelSpec spec) : spec_(std::move(spec)) {}
    virtual ~NeuralModel() = default;
    NeuralModel(const NeuralModel&) = delete;
    NeuralModel& operator=(const NeuralModel&) = delete;

    virtual Var forward(Tape& tape, const Tensor& encoder, const Tensor& decoder) = 0;

    const ModelSpec& spec() const { return spec_; }
    std::vector<Parameter*> parameters() const { return store_.parameters(); }
    Parameter* find_parameter(std::string_view name) const { return store_.find(name); }
    std::size_t parameter_count() const { return store_.parameter_count(); }

    std::vector<Tensor> snapshot() const {
        std::vector<Tensor> out;
        for (auto* p : parameters()) out.push_back(p->value);
        return out;
    }

    void restore(const std::vector<Tensor>& values) {
        auto params = parameters();
        if (values.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "snapshot size mismatch");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (values[i].shape() != params[i]->value.shape())
                throw Error(ErrorCode::ShapeMismatch, params[i]->name + ": " + shape_string(values[i].shape()) + " vs " +
                                                          shape_string(params[i]->value.shape()));
            params[i]->value = values[i];
        }
    }

protected:
    void check_inputs(const Tensor& encoder, const Tensor& decoder) const {
        const Shape enc{encoder.dim(0), spec_.lookback(), spec_.d_in()};
        const Shape dec{encoder.dim(0), spec_.horizon(), spec_.d_in()};
        if (encoder.shape() != enc) detail::shape_error("encoder input", encoder.shape(), enc);
        if (decoder.shape() != dec) detail::shape_error("decoder input", decoder.shape(), dec);
    }

    ModelSpec spec_;
    ParameterStore store_;
};

/// Two ReLU hidden layers over the last `mlp_lags` loads and the origin-hour calendar features.
class MlpModel : public NeuralModel {
public:
    MlpModel(ModelSpec spec, std::uint64_t seed) : NeuralModel(std::move(spec)) {
        if (spec_.lookback() < spec_.mlp_lags)
            throw Error(ErrorCode::ShapeMismatch, "MLP needs lookback >= " + std::to_string(spec_.mlp_lags));
        std::mt19937_64 rng(seed);
        const std::size_t in = input_size(), hid = spec_.mlp_hidden, out = spec_.horizon() * spec_.d_out();
        fc1_ = Linear::create(store_, rng, "fc1", in, hid);
        fc2_ = Linear::create(store_, rng, "fc2", hid, hid);
        fc3_ = Linear::create(store_, rng, "fc3", hid, out);
    }

    std::size_t input_size() const { return spec_.mlp_lags * spec_.d_out() + kCalendarFeatures; }

    /// Flat input [B, input_size()] to [B, h * d_out].
    Var forward_flat(Tape& tape, const Var& x) const {
        if (x.value().rank() != 2 || x.value().dim(1) != input_size())
            detail::shape_error("mlp input", x.shape(), Shape{x.value().dim(0), input_size()});
        Var h1 = relu(fc1_(tape, x));
        Var h2 = relu(fc2_(tape, h1));
        return fc3_(tape, h2);
    }

    Var forward(Tape& tape, const Tensor& encoder, const Tensor& decoder) override {
        check_inputs(encoder, decoder);
        const std::size_t B = encoder.dim(0), L = spec_.lookback(), dout = spec_.d_out();
        Var enc = tape.constant(encoder);
        Var lags = reshape(slice(slice(enc, 1, L - spec_.mlp_lags, L), 2, 0, dout), {B, spec_.mlp_lags * dout});
        Var feats = reshape(slice(slice(enc, 1, L - 1, L), 2, dout, spec_.d_in()), {B, kCalendarFeatures});
        return reshape(forward_flat(tape, concat({lags, feats})), {B, spec_.horizon(), dout});
    }

private:
    Linear fc1_, fc2_, fc3_;
};

/// Stacked LSTM over the encoder block; the final hidden state feeds a linear head that emits
/// all h steps at once. Gate order in the fused weights: input, forget, candidate, output.
class LstmModel : public NeuralModel {
public:
    struct Layer {
        Parameter* w_input = nullptr;   // [in, 4u]
        Parameter* w_hidden = nullptr;  // [u, 4u]
        Parameter* bias = nullptr;      // [4u]
    };

    struct Trace {
        Var output;
        std::vector<std::vector<Var>> hidden;  // [layer][t]
        std::vector<std::vector<Var>> cell;    // [layer][t]
    };

    LstmModel(ModelSpec spec, std::uint64_t seed) : NeuralModel(std::move(spec)) {
        std::mt19937_64 rng(seed);
        const std::size_t u = spec_.lstm_units;
        for (std::size_t l = 0; l < spec_.lstm_layers; ++l) {
            const std::size_t in = l == 0 ? spec_.d_in() : u;
            const std::string name = "lstm" + std::to_string(l);
            Layer layer;
            layer.w_input = &store_.add(name + ".w_input", glorot(rng, in, 4 * u, {in, 4 * u}));
            layer.w_hidden = &store_.add(name + ".w_hidden", glorot(rng, u, 4 * u, {u, 4 * u}));
            layer.bias = &store_.add(name + ".bias", Tensor({4 * u}));
            layers_.push_back(layer);
        }
        head_ = Linear::create(store_, rng, "head", u, spec_.horizon() * spec_.d_out());
    }

    const std::vector<Layer>& layers() const { return layers_; }

    Trace forward_trace(Tape& tape, const Tensor& encoder) const {
        const std::size_t B = encoder.dim(0), L = encoder.dim(1), u = spec_.lstm_units;
        Trace tr;
        Var input = tape.constant(encoder);
        std::vector<Var> steps;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& layer = layers_[l];
            Var wh = tape.param(*layer.w_hidden);
            Var b = tape.param(*layer.bias);
            std::vector<Var> hs, cs;
            Var h = tape.constant(Tensor({B, u}));
            Var c = tape.constant(Tensor({B, u}));
            // Input projection of the whole sequence at once for the first layer.
            std::optional<Var> projected;
            if (l == 0) projected = matmul(input, tape.param(*layer.w_input));
            Var wi = tape.param(*layer.w_input);
            for (std::size_t t = 0; t < L; ++t) {
                Var xz = projected ? reshape(slice(*projected, 1, t, t + 1), {B, 4 * u}) : matmul(steps[t], wi);
                Var z = add(add(xz, matmul(h, wh)), b);
                Var i = sigmoid(slice(z, 1, 0, u));
                Var f = sigmoid(slice(z, 1, u, 2 * u));
                Var g = tanh(slice(z, 1, 2 * u, 3 * u));
                Var o = sigmoid(slice(z, 1, 3 * u, 4 * u));
                c = add(mul(f, c), mul(i, g));
                h = mul(o, tanh(c));
                hs.push_back(h);
                cs.push_back(c);
            }
            steps = hs;
            tr.hidden.push_back(std::move(hs));
            tr.cell.push_back(std::move(cs));
        }
        tr.output = reshape(head_(tape, steps.back()), {B, spec_.horizon(), spec_.d_out()});
        return tr;
    }

    Var forward(Tape& tape, const Tensor& encoder, const Tensor& decoder) override {
        check_inputs(encoder, decoder);
        return forward_trace(tape, encoder).output;
    }

private:
    std::vector<Layer> layers_;
    Linear head_;
};

/// Encoder-decoder Transformer with post-norm residual blocks. Decoder inputs carry calendar
/// features with zeroed loads, so all h steps are produced in one pass.
class TransformerModel : public NeuralModel {
public:
    struct EncoderLayer {
        AttentionParams self_attn;
        LayerNormParams norm1, norm2;
        Linear ff1, ff2;
    };
    struct DecoderLayer {
        AttentionParams self_attn, cross_attn;
        LayerNormParams norm1, norm2, norm3;
        Linear ff1, ff2;
    };

    TransformerModel(ModelSpec spec, std::uint64_t seed) : NeuralModel(std::move(spec)) {
        const std::size_t d = spec_.d_model;
        if (spec_.heads == 0 || d % spec_.heads != 0)
            throw Error(ErrorCode::HeadDivisibility, "d_model " + std::to_string(d) + " not divisible by " + std::to_string(spec_.heads) + " heads");
        std::mt19937_64 rng(seed);
        enc_in_ = Linear::create(store_, rng, "encoder_in", spec_.d_in(), d);
        dec_in_ = Linear::create(store_, rng, "decoder_in", spec_.d_in(), d);
        if (spec_.positional == PositionalEncoding::Learned) {
            const std::size_t rows = spec_.lookback() + spec_.horizon();
            std::normal_distribution<double> n(0.0, 0.02);
            Tensor table({rows, d});
            for (auto& v : table.data()) v = n(rng);
            positions_ = &store_.add("positions", std::move(table));
        }
        for (std::size_t l = 0; l < spec_.layers; ++l) {
            const std::string name = "encoder" + std::to_string(l);
            encoder_.push_back({AttentionParams::create(store_, rng, name + ".self", d),
                                LayerNormParams::create(store_, name + ".norm1", d),
                                LayerNormParams::create(store_, name + ".norm2", d),
                                Linear::create(store_, rng, name + ".ff1", d, spec_.ff_dim),
                                Linear::create(store_, rng, name + ".ff2", spec_.ff_dim, d)});
        }
        for (std::size_t l = 0; l < spec_.layers; ++l) {
            const std::string name = "decoder" + std::to_string(l);
            decoder_.push_back({AttentionParams::create(store_, rng, name + ".self", d),
                                AttentionParams::create(store_, rng, name + ".cross", d),
                                LayerNormParams::create(store_, name + ".norm1", d),
                                LayerNormParams::create(store_, name + ".norm2", d),
                                LayerNormParams::create(store_, name + ".norm3", d),
                                Linear::create(store_, rng, name + ".ff1", d, spec_.ff_dim),
                                Linear::create(store_, rng, name + ".ff2", spec_.ff_dim, d)});
        }
        out_ = Linear::create(store_, rng, "output", d, spec_.d_out());
        if (spec_.positional == PositionalEncoding::Sinusoidal) {
            // Decoder positions continue after the encoder's.
            enc_pe_ = sinusoidal_positions(spec_.lookback(), d, 0);
            dec_pe_ = sinusoidal_positions(spec_.horizon(), d, spec_.lookback());
        }
        if (spec_.causal_decoder) dec_mask_ = causal_mask(spec_.horizon());
    }

    /// Attention maps of the last forward call, recorded when `record_attention` is set.
    bool record_attention = false;
    std::vector<Tensor> attention_maps;

    Var forward(Tape& tape, const Tensor& encoder, const Tensor& decoder) override {
        check_inputs(encoder, decoder);
        attention_maps.clear();
        auto* maps = record_attention ? &attention_maps : nullptr;
        const double p = spec_.dropout;
        const std::size_t L = spec_.lookback(), h = spec_.horizon();

        Var x = enc_in_(tape, tape.constant(encoder));
        Var y = dec_in_(tape, tape.constant(decoder));
        if (spec_.positional == PositionalEncoding::Sinusoidal) {
            x = add(x, tape.constant(*enc_pe_));
            y = add(y, tape.constant(*dec_pe_));
        } else if (spec_.positional == PositionalEncoding::Learned) {
            Var table = tape.param(*positions_);
            x = add(x, slice(table, 0, 0, L));
            y = add(y, slice(table, 0, L, L + h));
        }
        x = dropout(x, p);
        y = dropout(y, p);

        for (const auto& layer : encoder_) {
            Var a = multi_head_attention(tape, layer.self_attn, x, x, spec_.heads, nullptr, p, maps);
            x = layer.norm1(tape, add(x, dropout(a, p)));
            Var f = layer.ff2(tape, dropout(relu(layer.ff1(tape, x)), p));
            x = layer.norm2(tape, add(x, dropout(f, p)));
        }
        const Tensor* self_mask = dec_mask_ ? &*dec_mask_ : nullptr;
        for (const auto& layer : decoder_) {
            Var a = multi_head_attention(tape, layer.self_attn, y, y, spec_.heads, self_mask, p, maps);
            y = layer.norm1(tape, add(y, dropout(a, p)));
            Var c = multi_head_attention(tape, layer.cross_attn, y, x, spec_.heads, nullptr, p, maps);
            y = layer.norm2(tape, add(y, dropout(c, p)));
            Var f = layer.ff2(tape, dropout(relu(layer.ff1(tape, y)), p));
            y = layer.norm3(tape, add(y, dropout(f, p)));
        }
        return out_(tape, y);
    }

private:
    Linear enc_in_, dec_in_, out_;
    Parameter* positions_ = nullptr;
    std::vector<EncoderLayer> encoder_;
    std::vector<DecoderLayer> decoder_;
    std::optional<Tensor> enc_pe_, dec_pe_, dec_mask_;
};

inline std::unique_ptr<NeuralModel> make_neural_model(const ModelSpec& spec, std::uint64_t seed) {
    switch (spec.family) {
    case Family::Mlp:
        if (spec.strategy.multivariate()) throw Error(ErrorCode::InvalidArgument, "the MLP is a univariate model");
        return std::make_unique<MlpModel>(spec, seed);
    case Family::Lstm: return std::make_unique<LstmModel>(spec, seed);
    case Family::Transformer: return std::make_unique<TransformerModel>(spec, seed);
    default: throw Error(ErrorCode::InvalidArgument, std::string(to_string(spec.family)) + " is not a neural family");
    }
}

/// Runs a model in inference mode on one batch.
inline Tensor predict(NeuralModel& model, const Batch& batch) {
    Tape tape(TapeOptions{.training = false, .record_grad = false});
    return model.forward(tape, batch.encoder, batch.decoder).value();
}

// ---------------------------------------------------------------------------------------------
// Checkpoints: <stem>.json manifest plus <stem>.bin tensor blob
// ---------------------------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'G', 'R', 'D', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Blob layout (little-endian): magic[8], u32 version, u32 count, then per tensor
/// {u32 name_len, name, u32 rank, u64 dims[rank], u64 data_offset}, then the f64 payload.
inline void write_tensor_blob(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
    auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    out.write(kCheckpointMagic, 8);
    put32(kCheckpointVersion);
    put32(static_cast<std::uint32_t>(params.size()));
    std::uint64_t offset = 0;
    for (auto* p : params) {
        put32(static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put32(static_cast<std::uint32_t>(p->value.rank()));
        for (auto d : p->value.shape()) put64(d);
        put64(offset);
        offset += p->value.size() * sizeof(double);
    }
    for (auto* p : params)
        out.write(reinterpret_cast<const char*>(p->value.ptr()), static_cast<std::streamsize>(p->value.size() * sizeof(double)));
}

inline void read_tensor_blob(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::FileNotFound, path.string());
    auto get32 = [&] { std::uint32_t v = 0; in.read(reinterpret_cast<char*>(&v), 4); return v; };
    auto get64 = [&] { std::uint64_t v = 0; in.read(reinterpret_cast<char*>(&v), 8); return v; };
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw Error(ErrorCode::BadCheckpoint, path.string() + ": bad magic");
    if (get32() != kCheckpointVersion) throw Error(ErrorCode::BadCheckpoint, path.string() + ": unsupported version");
    const std::uint32_t count = get32();
    struct Entry { std::string name; Shape shape; std::uint64_t offset; };
    std::vector<Entry> entries;
    for (std::uint32_t i = 0; i < count && in; ++i) {
        Entry e;
        e.name.resize(get32());
        in.read(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        const std::uint32_t rank = get32();
        for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(get64());
        e.offset = get64();
        entries.push_back(std::move(e));
    }
    if (!in) throw Error(ErrorCode::BadCheckpoint, path.string() + ": truncated index");
    const auto payload = in.tellg();
    for (auto* p : params) {
        auto it = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.name == p->name; });
        if (it == entries.end()) throw Error(ErrorCode::BadCheckpoint, "missing tensor " + p->name);
        if (it->shape != p->value.shape())
            throw Error(ErrorCode::BadCheckpoint, p->name + ": stored " + shape_string(it->shape) + ", expected " + shape_string(p->value.shape()));
        in.seekg(payload + static_cast<std::streamoff>(it->offset));
        in.read(reinterpret_cast<char*>(p->value.ptr()), static_cast<std::streamsize>(p->value.size() * sizeof(double)));
        if (!in) throw Error(ErrorCode::BadCheckpoint, path.string() + ": truncated payload");
    }
}

inline void save_checkpoint(const NeuralModel& model, const std::filesystem::path& stem, std::uint64_t seed,
                            const std::string& scaler_digest, nlohmann::json extra = nlohmann::json::object()) {
    auto bin = stem;
    bin += ".bin";
    auto manifest = stem;
    manifest += ".json";
    write_tensor_blob(bin, model.parameters());
    nlohmann::json j = extra;
    j["format_version"] = kCheckpointVersion;
    j["spec"] = to_json(model.spec());
    j["seed"] = seed;
    j["scaler_hash"] = scaler_digest;
    j["blob"] = bin.filename().string();
    nlohmann::json index = nlohmann::json::array();
    for (auto* p : model.parameters()) index.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    j["tensors"] = index;
    std::ofstream(manifest) << j.dump(2) << '\n';
}

inline std::unique_ptr<NeuralModel> load_checkpoint(const std::filesystem::path& stem) {
    auto manifest = stem;
    manifest += ".json";
    if (!std::filesystem::exists(manifest)) throw Error(ErrorCode::FileNotFound, manifest.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(std::ifstream(manifest));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadCheckpoint, manifest.string() + ": " + e.what());
    }
    if (j.value("format_version", 0u) != kCheckpointVersion) throw Error(ErrorCode::BadCheckpoint, "unsupported manifest version");
    auto model = make_neural_model(model_spec_from_json(j.at("spec")), j.at("seed").get<std::uint64_t>());
    read_tensor_blob(stem.parent_path() / j.at("blob").get<std::string>(), model->parameters());
    return model;
}

} // namespace gridcast
