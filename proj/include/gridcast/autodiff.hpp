#pragma once

#include "gridcast/error.hpp"
#include "gridcast/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridcast {

/// A learnable tensor owned by a model. Gradients from Tape::backward accumulate into `grad`.
struct Parameter {
    Parameter(std::string name_, Tensor value_)
        : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

    void zero_grad() { grad.fill(0.0); }

    std::string name;
    Tensor value;
    Tensor grad;
};

class Tape;

/// Handle to a node on a Tape. Invalidated when the tape is cleared.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

struct TapeOptions {
    bool training = false;
    bool record_grad = true;
    std::uint64_t seed = 0;
};

/// Append-only record of forward operations. Node creation order is a topological order, so
/// backward is a single reverse sweep.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    explicit Tape(TapeOptions options) : options_(options), rng_(options.seed) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool training() const { return options_.training; }
    bool recording() const { return options_.record_grad; }
    std::mt19937_64& rng() { return rng_; }
    std::size_t size() const { return nodes_.size(); }

    Var constant(Tensor value) {
        nodes_.push_back(Node{"constant", std::move(value)});
        return Var(this, nodes_.size() - 1);
    }

    Var param(Parameter& p) {
        Node node{"param", Tensor{}};
        node.param = &p;
        node.requires_grad = options_.record_grad;
        nodes_.push_back(std::move(node));
        return Var(this, nodes_.size() - 1);
    }

    /// Records an operation. `backward` is kept only when some input needs a gradient; it reads
    /// the output gradient with out_grad(self) and accumulates into grad_of(input).
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
        return record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
    }

    Var record(std::string_view op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
        Node node{op, std::move(value)};
        for (const auto& in : inputs) {
            if (in.tape_ != this) throw Error(ErrorCode::DetachedGraph, "input of '" + std::string(op) + "' belongs to another tape");
            node.inputs.push_back(in.id_);
            node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
        }
        if (node.requires_grad) node.backward = std::move(backward);
        nodes_.push_back(std::move(node));
        return Var(this, nodes_.size() - 1);
    }

    const Tensor& value(std::size_t id) const {
        const auto& n = nodes_[id];
        return n.param ? n.param->value : n.value;
    }
    const Tensor& value(const Var& v) const { return value(v.id_); }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    bool requires_grad(const Var& v) const { return requires_grad(v.id_); }
    std::string_view op(std::size_t id) const { return nodes_[id].op; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

    const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }

    /// Gradient buffer of a node, or nullptr when no gradient flows into it.
    Tensor* grad_of(std::size_t id) {
        auto& n = nodes_[id];
        if (!n.requires_grad) return nullptr;
        if (!n.has_grad) {
            n.grad = Tensor(value(id).shape());
            n.has_grad = true;
        }
        return &n.grad;
    }
    Tensor* grad_of(const Var& v) { return grad_of(v.id_); }

    /// Reverse sweep from a scalar loss. Parameter gradients are summed into Parameter::grad and
    /// the tape is cleared afterwards.
    void backward(const Var& loss) {
        if (loss.tape_ != this) throw Error(ErrorCode::DetachedGraph, "loss recorded on another tape");
        if (value(loss).size() != 1)
            throw Error(ErrorCode::NonScalarLoss, "loss has shape " + shape_string(value(loss).shape()));
        if (!nodes_[loss.id_].requires_grad)
            throw Error(ErrorCode::DetachedGraph, "loss does not depend on any parameter");
        grad_of(loss.id_)->fill(1.0);
        for (std::size_t i = loss.id_ + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (!n.has_grad) continue;
            if (n.backward) n.backward(*this, i);
            if (n.param) {
                auto dst = n.param->grad.data();
                auto src = n.grad.data();
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
            }
        }
        clear();
    }

    void clear() { nodes_.clear(); }

private:
    struct Node {
        std::string_view op;
        Tensor value;
        Tensor grad{};
        bool has_grad = false;
        bool requires_grad = false;
        std::vector<std::size_t> inputs{};
        BackwardFn backward{};
        Parameter* param = nullptr;
    };

    TapeOptions options_{};
    std::mt19937_64 rng_{0};
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline Tape& same_tape(const Var& a, const Var& b) {
    if (&a.tape() != &b.tape()) throw Error(ErrorCode::DetachedGraph, "operands live on different tapes");
    return a.tape();
}

inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

[[noreturn]] inline void shape_error(std::string_view op, const Shape& a, const Shape& b) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

template <class F, class D>
Var unary(std::string_view op, const Var& x, F f, D dfdx) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    std::size_t xid = x.id();
    return x.tape().record(op, std::move(out), {x}, [xid, dfdx](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_of(xid);
        if (!gx) return;
        const Tensor& g = t.out_grad(self);
        const Tensor& xv = t.value(xid);
        const Tensor& yv = t.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * dfdx(xv[i], yv[i]);
    });
}

// Elementwise binary op where `b` is broadcast over the leading dimensions of `a`.
template <class F, class DA, class DB>
Var broadcast_binary(std::string_view op, Var a, Var b, F f, DA dfda, DB dfdb) {
    Tape& tape = same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!is_suffix(bv.shape(), av.shape())) shape_error(op, av.shape(), bv.shape());
    Tensor out(av.shape());
    const std::size_t nb = bv.size();
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i % nb]);
    std::size_t aid = a.id(), bid = b.id();
    return tape.record(op, std::move(out), {a, b}, [aid, bid, dfda, dfdb](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        const Tensor& av = t.value(aid);
        const Tensor& bv = t.value(bid);
        const std::size_t nb = bv.size();
        if (Tensor* ga = t.grad_of(aid))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dfda(av[i], bv[i % nb]);
        if (Tensor* gb = t.grad_of(bid))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % nb] += g[i] * dfdb(av[i], bv[i % nb]);
    });
}

} // namespace detail

// ---------------------------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------------------------

/// a + b. Either operand may be broadcast over the other's leading dimensions.
inline Var add(const Var& a, const Var& b) {
    const bool swap = a.value().rank() < b.value().rank() ||
                      (a.value().rank() == b.value().rank() && a.value().size() < b.value().size());
    const Var& big = swap ? b : a;
    const Var& small = swap ? a : b;
    return detail::broadcast_binary(
        "add", big, small, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

/// a - b with b broadcast over a's leading dimensions.
inline Var sub(const Var& a, const Var& b) {
    return detail::broadcast_binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

/// Elementwise product. Either operand may be broadcast over the other's leading dimensions.
inline Var mul(const Var& a, const Var& b) {
    const bool swap = a.value().rank() < b.value().rank() ||
                      (a.value().rank() == b.value().rank() && a.value().size() < b.value().size());
    const Var& big = swap ? b : a;
    const Var& small = swap ? a : b;
    return detail::broadcast_binary(
        "mul", big, small, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Var scale(const Var& x, double s) {
    return detail::unary(
        "scale", x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

inline Var relu(const Var& x) {
    return detail::unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(const Var& x) {
    return detail::unary(
        "sigmoid", x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(const Var& x) {
    return detail::unary(
        "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

/// Natural log; inputs must be positive.
inline Var log(const Var& x) {
    return detail::unary(
        "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

// ---------------------------------------------------------------------------------------------
// Linear algebra and shape manipulation
// ---------------------------------------------------------------------------------------------

/// [..., m, k] x [k, n] (shared right operand) or [..., m, k] x [..., k, n] (matching batch dims).
inline Var matmul(const Var& a, const Var& b) {
    using detail::ConstMatMap;
    using detail::MatMap;
    Tape& tape = detail::same_tape(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rank() < 2 || B.rank() < 2 || A.dim_back(0) != B.dim_back(1)) detail::shape_error("matmul", A.shape(), B.shape());
    const bool shared = B.rank() == 2;
    if (!shared && (A.rank() != B.rank() || !std::equal(A.shape().begin(), A.shape().end() - 2, B.shape().begin())))
        detail::shape_error("matmul", A.shape(), B.shape());
    const std::size_t m = A.dim_back(1), k = A.dim_back(0), n = B.dim_back(0);
    const std::size_t batch = A.size() / (m * k);
    Shape out_shape = A.shape();
    out_shape.back() = n;
    Tensor C(out_shape);
    if (shared) {
        MatMap(C.ptr(), batch * m, n).noalias() = ConstMatMap(A.ptr(), batch * m, k) * ConstMatMap(B.ptr(), k, n);
    } else {
        for (std::size_t i = 0; i < batch; ++i)
            MatMap(C.ptr() + i * m * n, m, n).noalias() =
                ConstMatMap(A.ptr() + i * m * k, m, k) * ConstMatMap(B.ptr() + i * k * n, k, n);
    }
    std::size_t aid = a.id(), bid = b.id();
    return tape.record("matmul", std::move(C), {a, b}, [=](Tape& t, std::size_t self) {
        const Tensor& G = t.out_grad(self);
        const Tensor& A = t.value(aid);
        const Tensor& B = t.value(bid);
        Tensor* gA = t.grad_of(aid);
        Tensor* gB = t.grad_of(bid);
        if (shared) {
            ConstMatMap g(G.ptr(), batch * m, n);
            if (gA) MatMap(gA->ptr(), batch * m, k).noalias() += g * ConstMatMap(B.ptr(), k, n).transpose();
            if (gB) MatMap(gB->ptr(), k, n).noalias() += ConstMatMap(A.ptr(), batch * m, k).transpose() * g;
        } else {
            for (std::size_t i = 0; i < batch; ++i) {
                ConstMatMap g(G.ptr() + i * m * n, m, n);
                if (gA)
                    MatMap(gA->ptr() + i * m * k, m, k).noalias() +=
                        g * ConstMatMap(B.ptr() + i * k * n, k, n).transpose();
                if (gB)
                    MatMap(gB->ptr() + i * k * n, k, n).noalias() +=
                        ConstMatMap(A.ptr() + i * m * k, m, k).transpose() * g;
            }
        }
    });
}

/// Swaps the last two dimensions.
inline Var transpose(const Var& x) {
    const Tensor& X = x.value();
    if (X.rank() < 2) throw Error(ErrorCode::ShapeMismatch, "transpose needs rank >= 2, got " + shape_string(X.shape()));
    const std::size_t r = X.dim_back(1), c = X.dim_back(0), batch = X.size() / (r * c);
    Shape out_shape = X.shape();
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    Tensor Y(out_shape);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) Y[b * r * c + j * r + i] = X[b * r * c + i * c + j];
    std::size_t xid = x.id();
    return x.tape().record("transpose", std::move(Y), {x}, [=](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_of(xid);
        if (!gx) return;
        const Tensor& g = t.out_grad(self);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) (*gx)[b * r * c + i * c + j] += g[b * r * c + j * r + i];
    });
}

inline Var reshape(const Var& x, Shape shape) {
    Tensor y = x.value().reshaped(std::move(shape));
    std::size_t xid = x.id();
    return x.tape().record("reshape", std::move(y), {x}, [xid](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_of(xid);
        if (!gx) return;
        const Tensor& g = t.out_grad(self);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    });
}

/// x[..., begin:end, ...] along `axis`.
inline Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
    const Tensor& X = x.value();
    if (axis >= X.rank() || begin >= end || end > X.dim(axis))
        throw Error(ErrorCode::ShapeMismatch, "slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                                                  ") on axis " + std::to_string(axis) + " of " + shape_string(X.shape()));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= X.dim(i);
    for (std::size_t i = axis + 1; i < X.rank(); ++i) inner *= X.dim(i);
    const std::size_t len = end - begin, full = X.dim(axis);
    Shape out_shape = X.shape();
    out_shape[axis] = len;
    Tensor Y(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(X.ptr() + (o * full + begin) * inner, len * inner, Y.ptr() + o * len * inner);
    std::size_t xid = x.id();
    return x.tape().record("slice", std::move(Y), {x}, [=](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_of(xid);
        if (!gx) return;
        const Tensor& g = t.out_grad(self);
        for (std::size_t o = 0; o < outer; ++o) {
            double* dst = gx->ptr() + (o * full + begin) * inner;
            const double* src = g.ptr() + o * len * inner;
            for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

/// Concatenation along the last dimension.
inline Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of zero tensors");
    Tape& tape = parts.front().tape();
    const Shape& first = parts.front().shape();
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::same_tape(parts.front(), p);
        const Shape& s = p.shape();
        if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin()))
            detail::shape_error("concat", first, s);
        total += s.back();
    }
    const std::size_t rows = parts.front().value().size() / first.back();
    Shape out_shape = first;
    out_shape.back() = total;
    Tensor Y(out_shape);
    std::vector<std::size_t> ids, widths;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const Tensor& P = p.value();
        const std::size_t w = P.dim_back(0);
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(P.ptr() + r * w, w, Y.ptr() + r * total + offset);
        offset += w;
        ids.push_back(p.id());
        widths.push_back(w);
    }
    return tape.record("concat", std::move(Y), parts, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (Tensor* gp = t.grad_of(ids[k]))
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < widths[k]; ++j) (*gp)[r * widths[k] + j] += g[r * total + off + j];
            off += widths[k];
        }
    });
}

// ---------------------------------------------------------------------------------------------
// Normalization, attention helpers, regularization
// ---------------------------------------------------------------------------------------------

/// Softmax over the last dimension. Entries equal to -inf get exactly zero weight.
inline Var softmax(const Var& x) {
    const Tensor& X = x.value();
    const std::size_t n = X.dim_back(0), rows = X.size() / n;
    Tensor Y(X.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = X.ptr() + r * n;
        double* out = Y.ptr() + r * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += (out[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < n; ++j) out[j] /= s;
    }
    std::size_t xid = x.id();
    return x.tape().record("softmax", std::move(Y), {x}, [=](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_of(xid);
        if (!gx) return;
        const Tensor& g = t.out_grad(self);
        const Tensor& y = t.value(self);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gy = g.ptr() + r * n;
            const double* yy = y.ptr() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += gy[j] * yy[j];
            for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += yy[j] * (gy[j] - dot);
        }
    });
}

/// Normalizes the last dimension to zero mean / unit variance, then applies gain and shift.
inline Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps = 1e-5) {
    Tape& tape = detail::same_tape(x, gain);
    detail::same_tape(x, shift);
    const Tensor& X = x.value();
    const std::size_t n = X.dim_back(0), rows = X.size() / n;
    if (gain.value().size() != n || shift.value().size() != n)
        detail::shape_error("layer_norm", X.shape(), gain.shape());
    Tensor Y(X.shape());
    auto xhat = std::make_shared<std::vector<double>>(X.size());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    const double* gv = gain.value().ptr();
    const double* bv = shift.value().ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = X.ptr() + r * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += in[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(n);
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (in[j] - mean) * rs;
            (*xhat)[r * n + j] = h;
            Y[r * n + j] = h * gv[j] + bv[j];
        }
    }
    std::size_t xid = x.id(), gid = gain.id(), sid = shift.id();
    return tape.record("layer_norm", std::move(Y), {x, gain, shift}, [=](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        const double* gv = t.value(gid).ptr();
        Tensor* gx = t.grad_of(xid);
        Tensor* gg = t.grad_of(gid);
        Tensor* gs = t.grad_of(sid);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.ptr() + r * n;
            const double* hr = xhat->data() + r * n;
            if (gg)
                for (std::size_t j = 0; j < n; ++j) (*gg)[j] += gr[j] * hr[j];
            if (gs)
                for (std::size_t j = 0; j < n; ++j) (*gs)[j] += gr[j];
            if (gx) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    dxhat[j] = gr[j] * gv[j];
                    m1 += dxhat[j];
                    m2 += dxhat[j] * hr[j];
                }
                m1 /= static_cast<double>(n);
                m2 /= static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += (*rstd)[r] * (dxhat[j] - m1 - hr[j] * m2);
            }
        }
    });
}

/// Inverted dropout. Outside training mode (or with rate 0) the input node is returned as is.
inline Var dropout(const Var& x, double rate) {
    Tape& tape = x.tape();
    if (!tape.training() || rate <= 0.0) return x;
    if (rate >= 1.0) throw Error(ErrorCode::InvalidArgument, "dropout rate must be < 1");
    const Tensor& X = x.value();
    Tensor mask(X.shape());
    // Keep when the top 53 bits, read as a uniform in [0, 1), fall below 1 - rate.
    const auto threshold = static_cast<std::uint64_t>((1.0 - rate) * 9007199254740992.0);
    const double s = 1.0 / (1.0 - rate);
    auto& rng = tape.rng();
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (rng() >> 11) < threshold ? s : 0.0;
    Tensor Y(X.shape());
    for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = X[i] * mask[i];
    std::size_t xid = x.id();
    return tape.record("dropout", std::move(Y), {x}, [xid, mask = std::move(mask)](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_of(xid);
        if (!gx) return;
        const Tensor& g = t.out_grad(self);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
    });
}

// ---------------------------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------------------------

inline Var sum(const Var& x) {
    const Tensor& X = x.value();
    double s = 0.0;
    for (double v : X.data()) s += v;
    std::size_t xid = x.id();
    return x.tape().record("sum", Tensor::scalar(s), {x}, [xid](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_of(xid);
        if (!gx) return;
        const double g = t.out_grad(self)[0];
        for (auto& v : gx->data()) v += g;
    });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

/// mean((pred - target)^2) over all elements.
inline Var mse_loss(const Var& pred, const Var& target) {
    Tape& tape = detail::same_tape(pred, target);
    const Tensor& P = pred.value();
    const Tensor& T = target.value();
    if (P.shape() != T.shape()) detail::shape_error("mse_loss", P.shape(), T.shape());
    const double inv = 1.0 / static_cast<double>(P.size());
    double s = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) s += (P[i] - T[i]) * (P[i] - T[i]);
    std::size_t pid = pred.id(), tid = target.id();
    return tape.record("mse_loss", Tensor::scalar(s * inv), {pred, target}, [=](Tape& t, std::size_t self) {
        const double g = t.out_grad(self)[0] * 2.0 * inv;
        const Tensor& P = t.value(pid);
        const Tensor& T = t.value(tid);
        if (Tensor* gp = t.grad_of(pid))
            for (std::size_t i = 0; i < P.size(); ++i) (*gp)[i] += g * (P[i] - T[i]);
        if (Tensor* gt = t.grad_of(tid))
            for (std::size_t i = 0; i < P.size(); ++i) (*gt)[i] -= g * (P[i] - T[i]);
    });
}

// ---------------------------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------------------------

struct GradCheckReport {
    double worst_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    double tolerance = 0.0;
    bool passed = true;
};

struct GradCheckOptions {
    double eps = 1e-5;
    double tolerance = 1e-4;
    /// Denominator floor of the relative error, so that near-zero gradients compare absolutely.
    double floor = 1e-6;
    /// 0 checks every coordinate; otherwise a seeded random subset per parameter.
    std::size_t max_coords_per_param = 0;
    std::uint64_t seed = 0;
    /// Evaluate in training mode; every evaluation reseeds the tape so dropout masks repeat.
    bool training = false;
    std::uint64_t tape_seed = 0;
};

/// Compares backward() against central differences of `f` at the parameters' current values.
/// `f` must build a scalar on the given tape from `params` (via Tape::param).
inline GradCheckReport grad_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                                  const GradCheckOptions& opt = {}) {
    GradCheckReport report;
    report.tolerance = opt.tolerance;
    for (auto* p : params) p->zero_grad();
    {
        Tape tape(TapeOptions{.training = opt.training, .record_grad = true, .seed = opt.tape_seed});
        Var loss = f(tape);
        tape.backward(loss);
    }
    auto eval = [&f, &opt] {
        Tape tape(TapeOptions{.training = opt.training, .record_grad = false, .seed = opt.tape_seed});
        return f(tape).value().item();
    };
    std::mt19937_64 rng(opt.seed);
    for (auto* p : params) {
        std::vector<std::size_t> coords(p->value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (opt.max_coords_per_param && coords.size() > opt.max_coords_per_param) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opt.max_coords_per_param);
        }
        for (std::size_t i : coords) {
            const double orig = p->value[i];
            p->value[i] = orig + opt.eps;
            const double up = eval();
            p->value[i] = orig - opt.eps;
            const double down = eval();
            p->value[i] = orig;
            const double numeric = (up - down) / (2.0 * opt.eps);
            const double analytic = p->grad[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), opt.floor});
            const double rel = std::abs(numeric - analytic) / denom;
            ++report.checked;
            if (!(rel <= report.worst_relative_error)) {
                report.worst_relative_error = rel;
                report.worst_parameter = p->name;
                report.worst_index = i;
            }
        }
    }
    report.passed = report.worst_relative_error < opt.tolerance;
    return report;
}

} // namespace gridcast
