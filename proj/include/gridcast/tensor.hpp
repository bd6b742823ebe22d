#pragma once

#include "gridcast/error.hpp"

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gridcast {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major float64 array. Every dimension is at least 1; a scalar has shape [1].
class Tensor {
public:
    Tensor() : shape_{1}, data_(1, 0.0) {}

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (shape_size(shape_) != data_.size())
            throw Error(ErrorCode::ShapeMismatch, "shape " + shape_string(shape_) + " holds " +
                                                      std::to_string(shape_size(shape_)) + " values, got " +
                                                      std::to_string(data_.size()));
    }

    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    /// dim_back(0) is the last dimension.
    std::size_t dim_back(std::size_t k) const { return shape_.at(shape_.size() - 1 - k); }
    std::size_t size() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const {
        if (data_.size() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on " + shape_string(shape_));
        return data_[0];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape shape) const {
        Tensor out(std::move(shape));
        if (out.size() != size())
            throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " +
                                                      shape_string(out.shape_));
        out.data_ = data_;
        return out;
    }

    /// Bitwise equality of shape and contents.
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ &&
               (a.data_.empty() ||
                std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0);
    }

private:
    void check_shape() const {
        if (shape_.empty()) throw Error(ErrorCode::ShapeMismatch, "empty shape");
        for (auto d : shape_)
            if (d == 0) throw Error(ErrorCode::ShapeMismatch, "zero dimension in " + shape_string(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

} // namespace gridcast
