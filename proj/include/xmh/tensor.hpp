#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "xmh/rng.hpp"

namespace xmh {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Value type: copies are deep. Every extent must be positive, except that a
/// leading (batch) extent of zero is allowed so empty batches flow through.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  Tensor(std::initializer_list<std::size_t> shape, std::initializer_list<double> values);

  static Tensor uniform(Shape shape, double bound, Rng& rng);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// 2-D access; the tensor must be rank 2.
  double& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
  double at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

  /// View of one leading-axis slice.
  std::span<double> row(std::size_t i);
  std::span<const double> row(std::size_t i) const;
  std::size_t row_size() const;

  /// Same data, new extents; total size must match.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double value);
  void add_(const Tensor& other);
  void scale_(double factor);

  double sum() const;
  bool all_finite() const;

  /// Bitwise equality of extents and values.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

/// A value with a gradient buffer of identical shape.
///
/// Backward passes accumulate into grad; callers zero it between steps.
struct DualTensor {
  Tensor value;
  Tensor grad;

  DualTensor() = default;
  explicit DualTensor(Tensor v) : value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Fully-connected layer parameters: weight is out x in, bias is out.
struct AffineParams {
  DualTensor weight;
  DualTensor bias;

  AffineParams() = default;
  AffineParams(Tensor w, Tensor b);

  /// Uniform in [-1/sqrt(in), 1/sqrt(in)] for both weight and bias.
  static AffineParams init_uniform(std::size_t in, std::size_t out, Rng& rng);
  static AffineParams zeros(std::size_t in, std::size_t out);

  std::size_t in() const { return weight.value.extent(1); }
  std::size_t out() const { return weight.value.extent(0); }

  void zero_grad() {
    weight.zero_grad();
    bias.zero_grad();
  }
};

}  // namespace xmh
