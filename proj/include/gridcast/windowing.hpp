#pragma once

#include "gridcast/calendar.hpp"
#include "gridcast/dataset.hpp"
#include "gridcast/error.hpp"
#include "gridcast/tensor.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gridcast {

enum class StrategyKind { Multivariate, Local, Global };

inline const char* to_string(StrategyKind k) {
    switch (k) {
    case StrategyKind::Multivariate: return "multivariate";
    case StrategyKind::Local: return "local";
    case StrategyKind::Global: return "global";
    }
    return "?";
}

inline const char* short_name(StrategyKind k) {
    switch (k) {
    case StrategyKind::Multivariate: return "MV";
    case StrategyKind::Local: return "L";
    case StrategyKind::Global: return "G";
    }
    return "?";
}

inline StrategyKind strategy_from_string(std::string_view s) {
    if (s == "multivariate" || s == "mv") return StrategyKind::Multivariate;
    if (s == "local" || s == "l") return StrategyKind::Local;
    if (s == "global" || s == "g") return StrategyKind::Global;
    throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + std::string(s) + "'");
}

struct StrategySpec {
    StrategyKind kind = StrategyKind::Global;
    std::size_t lookback = 168;
    std::size_t horizon = 24;

    bool multivariate() const { return kind == StrategyKind::Multivariate; }
    std::size_t d_in(std::size_t clients) const { return (multivariate() ? clients : 1) + kCalendarFeatures; }
    std::size_t d_out(std::size_t clients) const { return multivariate() ? clients : 1; }
};

enum class SplitPart { Train, Val, Test };

inline constexpr std::uint32_t kAllClients = std::numeric_limits<std::uint32_t>::max();

/// Identifies one window: the encoder covers [origin-L+1, origin], targets [origin+1, origin+h].
struct SampleRef {
    std::uint32_t client = kAllClients;
    std::uint32_t origin = 0;

    friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

/// Samples grouped by the model that consumes them: one group for Multivariate and Global,
/// one group per client for Local.
struct SampleSet {
    std::vector<std::vector<SampleRef>> groups;

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& g : groups) n += g.size();
        return n;
    }

    std::vector<SampleRef> flat() const {
        std::vector<SampleRef> out;
        out.reserve(count());
        for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
        return out;
    }
};

struct OriginRange {
    std::size_t first = 0;
    std::size_t end = 0;  // exclusive

    std::size_t size() const { return end > first ? end - first : 0; }
};

/// Usable origins of a split part. Train windows lie fully inside train; validation and test
/// origins lie in their part and may draw history from earlier data.
inline OriginRange origin_range(const StrategySpec& spec, SplitPart part, const SplitDataset& ds) {
    if (spec.lookback < 1 || spec.horizon < 1) throw Error(ErrorCode::InvalidArgument, "lookback and horizon must be >= 1");
    std::size_t begin = 0, end = 0;
    switch (part) {
    case SplitPart::Train: begin = 0, end = ds.train_end; break;
    case SplitPart::Val: begin = ds.train_end, end = ds.val_end; break;
    case SplitPart::Test: begin = ds.val_end, end = ds.data.hours; break;
    }
    OriginRange r;
    r.first = std::max(begin, spec.lookback - 1);
    r.end = end >= spec.horizon ? end - spec.horizon : 0;
    if (r.size() == 0)
        throw Error(ErrorCode::SplitTooShort, "no origin with lookback " + std::to_string(spec.lookback) + " and horizon " +
                                                  std::to_string(spec.horizon) + " in a part of length " +
                                                  std::to_string(end - begin));
    return r;
}

inline SampleSet enumerate_samples(const StrategySpec& spec, SplitPart part, const SplitDataset& ds) {
    const OriginRange r = origin_range(spec, part, ds);
    const auto C = static_cast<std::uint32_t>(ds.data.clients());
    SampleSet set;
    auto add_client = [&](std::vector<SampleRef>& g, std::uint32_t c) {
        for (std::size_t t = r.first; t < r.end; ++t) g.push_back({c, static_cast<std::uint32_t>(t)});
    };
    switch (spec.kind) {
    case StrategyKind::Multivariate:
        set.groups.emplace_back();
        add_client(set.groups[0], kAllClients);
        break;
    case StrategyKind::Local:
        set.groups.resize(C);
        for (std::uint32_t c = 0; c < C; ++c) add_client(set.groups[c], c);
        break;
    case StrategyKind::Global:
        set.groups.emplace_back();
        set.groups[0].reserve(static_cast<std::size_t>(C) * r.size());
        for (std::uint32_t c = 0; c < C; ++c) add_client(set.groups[0], c);
        break;
    }
    return set;
}

/// Seeded Fisher-Yates permutation cut into batches; the final short batch is kept.
inline std::vector<std::vector<SampleRef>> shuffle_batches(std::span<const SampleRef> samples, std::size_t batch_size,
                                                           std::uint64_t seed) {
    if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    std::vector<SampleRef> order(samples.begin(), samples.end());
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * i) >> 64);
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<SampleRef>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    return batches;
}

/// Standardized data plus calendar features, from which windows are cut.
struct WindowSource {
    const SplitDataset& data;
    const FeatureMatrix& features;
};

struct WindowSample {
    Tensor encoder_input;  // [L, d_in]
    Tensor decoder_input;  // [h, d_in], load columns zero
    Tensor target;         // [h, d_out]
    std::uint32_t client = kAllClients;
    std::size_t origin = 0;
    HourStamp origin_time;
};

/// Encoder [B, L, d_in], decoder [B, h, d_in] and target [B, h, d_out] for a list of samples.
struct Batch {
    Tensor encoder;
    Tensor decoder;
    Tensor target;
};

namespace detail {

inline void write_row(double* out, const WindowSource& src, std::uint32_t client, std::size_t t, bool with_load) {
    const auto& ds = src.data.data;
    const std::size_t C = ds.clients();
    std::size_t k = 0;
    if (client == kAllClients) {
        for (std::size_t c = 0; c < C; ++c) out[k++] = with_load ? ds.at(t, c) : 0.0;
    } else {
        out[k++] = with_load ? ds.at(t, client) : 0.0;
    }
    const double* f = src.features.row(t);
    for (std::size_t j = 0; j < kCalendarFeatures; ++j) out[k++] = f[j];
}

inline void check_window(const SampleRef& s, const StrategySpec& spec, const WindowSource& src) {
    if (s.origin + 1 < spec.lookback) throw Error(ErrorCode::InsufficientHistory, "origin " + std::to_string(s.origin));
    if (s.origin + spec.horizon >= src.data.data.hours) throw Error(ErrorCode::HorizonOverrun, "origin " + std::to_string(s.origin));
    if ((s.client == kAllClients) != spec.multivariate())
        throw Error(ErrorCode::InvalidArgument, "sample client does not match the strategy");
}

} // namespace detail

inline Batch make_batch(std::span<const SampleRef> samples, const StrategySpec& spec, const WindowSource& src) {
    const std::size_t C = src.data.data.clients();
    const std::size_t B = samples.size(), L = spec.lookback, h = spec.horizon;
    const std::size_t din = spec.d_in(C), dout = spec.d_out(C);
    if (B == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
    Batch b{Tensor({B, L, din}), Tensor({B, h, din}), Tensor({B, h, dout})};
    for (std::size_t i = 0; i < B; ++i) {
        const auto& s = samples[i];
        detail::check_window(s, spec, src);
        const std::size_t t0 = s.origin + 1 - L;
        for (std::size_t j = 0; j < L; ++j) detail::write_row(b.encoder.ptr() + (i * L + j) * din, src, s.client, t0 + j, true);
        for (std::size_t j = 0; j < h; ++j) {
            const std::size_t t = s.origin + 1 + j;
            detail::write_row(b.decoder.ptr() + (i * h + j) * din, src, s.client, t, false);
            double* tgt = b.target.ptr() + (i * h + j) * dout;
            if (s.client == kAllClients)
                for (std::size_t c = 0; c < C; ++c) tgt[c] = src.data.data.at(t, c);
            else
                tgt[0] = src.data.data.at(t, s.client);
        }
    }
    return b;
}

inline WindowSample materialize(const SampleRef& s, const StrategySpec& spec, const WindowSource& src) {
    Batch b = make_batch(std::span(&s, 1), spec, src);
    const std::size_t C = src.data.data.clients();
    WindowSample w{b.encoder.reshaped({spec.lookback, spec.d_in(C)}), b.decoder.reshaped({spec.horizon, spec.d_in(C)}),
                   b.target.reshaped({spec.horizon, spec.d_out(C)}), s.client, s.origin,
                   src.data.data.timestamp(s.origin)};
    return w;
}

} // namespace gridcast
