#include "xmh/numkernel.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>

#include "xmh/errors.hpp"

namespace xmh {

namespace {

std::atomic<bool> tanh_sign_fault{false};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

struct Rows {
  std::size_t batch;
  std::size_t width;
};

Rows as_rows(const Tensor& x) {
  if (x.rank() == 1) return {1, x.extent(0)};
  if (x.rank() == 2) return {x.extent(0), x.extent(1)};
  throw DimensionError("expected a rank-1 or rank-2 tensor, got " + shape_string(x.shape()));
}

Shape with_width(const Tensor& like, std::size_t width) {
  if (like.rank() == 1) return {width};
  return {like.extent(0), width};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

}  // namespace

Tensor affine_forward(const Tensor& x, const AffineParams& params) {
  const auto [batch, width] = as_rows(x);
  if (width != params.in()) {
    throw DimensionError("affine: input width " + std::to_string(width) + " but layer expects " +
                         std::to_string(params.in()));
  }
  Tensor y(with_width(x, params.out()));
  if (batch == 0) return y;
  ConstMatrixMap X(x.data().data(), batch, width);
  ConstMatrixMap W(params.weight.value.data().data(), params.out(), params.in());
  ConstVectorMap b(params.bias.value.data().data(), params.out());
  MatrixMap Y(y.data().data(), batch, params.out());
  Y.noalias() = X * W.transpose();
  Y.rowwise() += b;
  return y;
}

AffineGrads affine_backward(const Tensor& x, const AffineParams& params, const Tensor& grad_out) {
  const auto [batch, width] = as_rows(x);
  const auto [gbatch, gwidth] = as_rows(grad_out);
  if (width != params.in() || gwidth != params.out() || gbatch != batch) {
    throw DimensionError("affine backward: x " + shape_string(x.shape()) + ", grad " +
                         shape_string(grad_out.shape()) + ", weight " +
                         shape_string(params.weight.value.shape()));
  }
  AffineGrads g{Tensor(x.shape()), Tensor(params.weight.value.shape()), Tensor(params.bias.value.shape())};
  if (batch == 0) return g;
  ConstMatrixMap X(x.data().data(), batch, width);
  ConstMatrixMap G(grad_out.data().data(), batch, gwidth);
  ConstMatrixMap W(params.weight.value.data().data(), params.out(), params.in());
  MatrixMap(g.x.data().data(), batch, width).noalias() = G * W;
  MatrixMap(g.weight.data().data(), params.out(), params.in()).noalias() = G.transpose() * X;
  Eigen::Map<Eigen::RowVectorXd>(g.bias.data().data(), params.out()) = G.colwise().sum();
  return g;
}

Tensor affine_backward_accumulate(const Tensor& x, AffineParams& params, const Tensor& grad_out) {
  AffineGrads g = affine_backward(x, params, grad_out);
  params.weight.grad.add_(g.weight);
  params.bias.grad.add_(g.bias);
  return std::move(g.x);
}

Tensor affine_backward_input(const AffineParams& params, const Tensor& grad_out) {
  const auto [batch, gwidth] = as_rows(grad_out);
  if (gwidth != params.out()) throw DimensionError("affine backward: cotangent width mismatch");
  Tensor gx(with_width(grad_out, params.in()));
  if (batch == 0) return gx;
  ConstMatrixMap G(grad_out.data().data(), batch, gwidth);
  ConstMatrixMap W(params.weight.value.data().data(), params.out(), params.in());
  MatrixMap(gx.data().data(), batch, params.in()).noalias() = G * W;
  return gx;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "relu backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

Tensor tanh_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = std::tanh(v);
  return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& grad_out) {
  require_same_shape(y, grad_out, "tanh backward");
  Tensor g = grad_out;
  const double sign = tanh_sign_fault.load(std::memory_order_relaxed) ? -1.0 : 1.0;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= sign * (1.0 - y[i] * y[i]);
  return g;
}

void set_tanh_backward_sign_fault(bool enabled) { tanh_sign_fault.store(enabled, std::memory_order_relaxed); }
bool tanh_backward_sign_fault() { return tanh_sign_fault.load(std::memory_order_relaxed); }

void softmax_inplace(std::span<double> values) {
  if (values.empty()) return;
  const double top = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (auto& v : values) {
    v = std::exp(v - top);
    total += v;
  }
  for (auto& v : values) v /= total;
}

void softmax_backward_inplace(std::span<const double> p, std::span<double> grad) {
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += grad[i] * p[i];
  for (std::size_t i = 0; i < p.size(); ++i) grad[i] = p[i] * (grad[i] - dot);
}

Tensor grid_softmax_forward(const Tensor& m) {
  Tensor p = m;
  softmax_inplace(p.data());
  return p;
}

Tensor grid_softmax_backward(const Tensor& p, const Tensor& grad_out) {
  require_same_shape(p, grad_out, "softmax backward");
  Tensor g = grad_out;
  softmax_backward_inplace(p.data(), g.data());
  return g;
}

Tensor softmax_rows_forward(const Tensor& m) {
  Tensor p = m;
  for (std::size_t b = 0; b < p.extent(0); ++b) softmax_inplace(p.row(b));
  return p;
}

Tensor softmax_rows_backward(const Tensor& p, const Tensor& grad_out) {
  require_same_shape(p, grad_out, "softmax backward");
  Tensor g = grad_out;
  for (std::size_t b = 0; b < g.extent(0); ++b) softmax_backward_inplace(p.row(b), g.row(b));
  return g;
}

Tensor threshold_ste_forward(const Tensor& p, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("threshold alpha must be positive");
  Tensor z = p;
  for (auto& v : z.data()) v = v >= alpha ? 1.0 : 0.0;
  return z;
}

Tensor threshold_ste_backward(const Tensor& grad_out) { return grad_out; }

}  // namespace xmh
