#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stageseq/tensor.hpp"

namespace stageseq {

/// W·x + b for x of length n, W of shape m×n, b of length m.
Tensor affine(const Tensor& x, const Tensor& weights, const Tensor& bias);

// Span form used on hot paths; `out` must have length m. No shape checks
// beyond the sizes implied by `weights`.
void affine_into(std::span<const double> x, const Tensor& weights, std::span<const double> bias,
                 std::span<double> out);

// out[n] += Wᵀ·g for W of shape m×n.
void affine_transpose_accumulate(std::span<const double> grad_out, const Tensor& weights, std::span<double> out);

// grad_W += g ⊗ x, grad_b += g.
void affine_weight_grad_accumulate(std::span<const double> grad_out, std::span<const double> x, Tensor& grad_weights,
                                   std::span<double> grad_bias);

/// Numerically stable softmax (max subtraction). Output is strictly positive
/// and sums to one.
Tensor softmax(const Tensor& logits);
void softmax_inplace(std::span<double> values);

double sigmoid(double x) noexcept;
double relu(double x) noexcept;

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

/// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Valid cross-correlation. `input` is H×W×c_in, `kernels` is k×k×c_in×c_out,
/// `bias` has c_out entries. Result is (H−k+1)×(W−k+1)×c_out.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);

// Accumulates parameter gradients of conv2d; writes the input gradient when
// `grad_input` is non-null.
void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output, Tensor& grad_kernels,
                     Tensor& grad_bias, Tensor* grad_input);

struct PoolResult {
  Tensor output;
  std::vector<std::size_t> source_index;  // flat input index that produced each output value
};

/// 2×2 max pooling with stride 2 over an H×W×c map; an odd trailing row or
/// column is dropped. Ties pick the first element in row-major window order.
PoolResult maxpool2(const Tensor& input);

Tensor maxpool2_backward(const Tensor& grad_output, std::span<const std::size_t> source_index,
                         const std::vector<std::size_t>& input_shape);

}  // namespace stageseq
