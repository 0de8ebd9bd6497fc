#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dfl/errors.hpp"

namespace dfl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit reals. Value semantics throughout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> idx) {
    return data_[flat_index(idx)];
  }
  double at(std::initializer_list<std::size_t> idx) const {
    return data_[flat_index(idx)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Reshape to a shape with identical element count; data is shared layout.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                       shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
  double abs_sum() const {
    double s = 0.0;
    for (double v : data_) s += std::abs(v);
    return s;
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return flat;
  }

  Shape shape_;
  std::vector<double> data_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace dfl
