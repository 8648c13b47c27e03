#pragma once

// Differentiable primitives with hand-written forward and backward passes.
//
// Batched ops treat the leading extent as the batch: an affine input of shape
// [B, in] maps to [B, out]; a rank-1 input is a single row.

#include <span>

#include "xmh/tensor.hpp"

namespace xmh {

Tensor affine_forward(const Tensor& x, const AffineParams& params);

struct AffineGrads {
  Tensor x;
  Tensor weight;
  Tensor bias;
};

/// Reverse-mode rule for affine_forward. Weight and bias grads are summed over
/// the batch.
AffineGrads affine_backward(const Tensor& x, const AffineParams& params, const Tensor& grad_out);

/// Adds the parameter gradients into params.{weight,bias}.grad and returns
/// the input gradient.
Tensor affine_backward_accumulate(const Tensor& x, AffineParams& params, const Tensor& grad_out);

/// Input gradient only; leaves params untouched.
Tensor affine_backward_input(const AffineParams& params, const Tensor& grad_out);

Tensor relu_forward(const Tensor& x);
/// Gradient at exactly zero is 0.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

Tensor tanh_forward(const Tensor& x);
/// Takes the forward *output* y: grad = (1 - y^2) * grad_out.
Tensor tanh_backward(const Tensor& y, const Tensor& grad_out);

/// Mutation hook for the gradient suite: flips the sign of tanh_backward.
void set_tanh_backward_sign_fault(bool enabled);
bool tanh_backward_sign_fault();

/// Softmax over every entry of m as one distribution (max-subtracted).
Tensor grid_softmax_forward(const Tensor& m);
Tensor grid_softmax_backward(const Tensor& p, const Tensor& grad_out);

/// Row-wise versions: each leading-axis slice is its own distribution.
Tensor softmax_rows_forward(const Tensor& m);
Tensor softmax_rows_backward(const Tensor& p, const Tensor& grad_out);

void softmax_inplace(std::span<double> values);
void softmax_backward_inplace(std::span<const double> p, std::span<double> grad);

/// z = 1 where p >= alpha (inclusive), else 0.
Tensor threshold_ste_forward(const Tensor& p, double alpha);
/// Straight-through: the cotangent passes unchanged.
Tensor threshold_ste_backward(const Tensor& grad_out);

}  // namespace xmh
