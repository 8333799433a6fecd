#pragma once

// Dense row-major tensor with value semantics.  Shapes are std::vector<int64_t>
// so rank is dynamic; all layout math lives here so kernels can work on raw
// pointers plus extents.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "wsr/common.hpp"

namespace wsr {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) {
        if (d < 0) throw DimensionError("negative extent in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {}
    Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
            throw DimensionError("tensor data size does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Multi-index access for tests and glue code; kernels index manually.
    template <typename... Ix>
    T& at(Ix... ix) {
        return data_[static_cast<std::size_t>(offset_of({static_cast<std::int64_t>(ix)...}))];
    }
    template <typename... Ix>
    const T& at(Ix... ix) const {
        return data_[static_cast<std::size_t>(offset_of({static_cast<std::int64_t>(ix)...}))];
    }

    std::int64_t offset_of(std::initializer_list<std::int64_t> ix) const {
        if (static_cast<int>(ix.size()) != rank())
            throw DimensionError("index rank mismatch for shape " + shape_str(shape_));
        std::int64_t off = 0;
        int k = 0;
        for (std::int64_t i : ix) {
            std::int64_t d = shape_[static_cast<std::size_t>(k)];
            if (i < 0 || i >= d) throw DimensionError("index out of range for shape " + shape_str(shape_));
            off = off * d + i;
            ++k;
        }
        return off;
    }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != size())
            throw DimensionError("reshape " + shape_str(shape_) + " -> " + shape_str(s) + " changes element count");
        Tensor out = *this;
        out.shape_ = std::move(s);
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void check_finite(const char* what) const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError(std::string("non-finite value produced by ") + what);
    }

  private:
    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
Tensor<T> uniform_tensor(Shape shape, Pcg32& rng, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& a) {
    Tensor<To> out(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = static_cast<To>(a[i]);
    return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

// max |a-b| / max(1, max|a|, max|b|): relative when values are large,
// absolute when everything is small.
template <typename T>
double rel_max_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionError("rel_max_diff: shape mismatch");
    double scale = 1.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        scale = std::max(scale, std::abs(static_cast<double>(a[i])));
        scale = std::max(scale, std::abs(static_cast<double>(b[i])));
    }
    return max_abs_diff(a, b) / scale;
}

}  // namespace wsr
