#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fpnseg/error.hpp"

namespace fpnseg {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), int64_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense row-major N-d array. The value type is a template parameter so the
// same kernels run in float for training and in double for gradient checks.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
  static BasicTensor full(Shape shape, T v) {
    return BasicTensor(std::move(shape), v);
  }
  static BasicTensor zeros_like(const BasicTensor& t) {
    return BasicTensor(t.shape());
  }

  const Shape& shape() const noexcept { return shape_; }
  int64_t rank() const noexcept { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const noexcept { return static_cast<int64_t>(data_.size()); }
  bool empty() const noexcept { return shape_.empty(); }

  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }
  const T& at(int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }
  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(
        ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(
        ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  BasicTensor reshaped(Shape shape) const {
    return BasicTensor(std::move(shape), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  BasicTensor& operator+=(const BasicTensor& o) {
    require_same_shape(o, "+=");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  BasicTensor& operator*=(T s) {
    for (T& v : data_) v *= s;
    return *this;
  }

  void require_same_shape(const BasicTensor& o, const char* op) const {
    if (shape_ != o.shape_)
      throw ShapeError(std::string(op) + ": shape mismatch " +
                       shape_string(shape_) + " vs " + shape_string(o.shape_));
  }

  double sum() const {
    double s = 0.0;
    for (T v : data_) s += static_cast<double>(v);
    return s;
  }

  bool operator==(const BasicTensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  void validate_shape() const {
    for (int64_t d : shape_)
      if (d <= 0)
        throw ShapeError("tensor extents must be positive, got " +
                         shape_string(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

}  // namespace fpnseg
