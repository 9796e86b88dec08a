#pragma once

#include <algorithm>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "reefgrad/errors.hpp"

namespace reefgrad {

/// Dense n-dimensional array with row-major contiguous storage.
///
/// Single precision (`Tensor`) is the production storage; the double
/// instantiation (`TensorD`) exists so finite-difference gradient checks
/// have numerical headroom.
template <typename T>
class TensorT {
public:
    using value_type = T;

    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(numel_from_shape(), T(0));
    }

    TensorT(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != numel_from_shape()) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string());
        }
    }

    static TensorT full(std::vector<std::size_t> shape, T value) {
        TensorT t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// 4-d accessors for the N,C,H,W layout used by the conv kernels.
    T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    std::string shape_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << ',';
            os << shape_[i];
        }
        os << ']';
        return os.str();
    }

    bool operator==(const TensorT& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::size_t numel_from_shape() const {
        std::size_t n = 1;
        for (std::size_t d : shape_) n *= d;
        return shape_.empty() ? 0 : n;
    }

    void validate_shape() const {
        if (shape_.empty()) {
            throw DimensionError("tensor shape must have at least one dimension");
        }
        for (std::size_t d : shape_) {
            if (d == 0) {
                throw DimensionError("tensor dimensions must be positive, got " + shape_string());
            }
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
void require_shape(const TensorT<T>& t, const std::vector<std::size_t>& shape, const char* what) {
    if (t.shape() != shape) {
        TensorT<T> probe(shape);
        throw DimensionError(std::string(what) + ": expected shape " + probe.shape_string() +
                             ", got " + t.shape_string());
    }
}

template <typename T>
void require_ndim(const TensorT<T>& t, std::size_t ndim, const char* what) {
    if (t.ndim() != ndim) {
        throw DimensionError(std::string(what) + ": expected " + std::to_string(ndim) +
                             "-d tensor, got " + t.shape_string());
    }
}

} // namespace reefgrad
