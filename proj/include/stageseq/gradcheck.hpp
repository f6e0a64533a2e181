#pragma once

#include <functional>
#include <span>
#include <vector>

#include "stageseq/tensor.hpp"

namespace stageseq {

/// Central-difference gradient of `loss` with respect to every coordinate of
/// `params`. `loss` must read the parameters through the same pointers; each
/// coordinate is perturbed in place and restored before moving on.
/// Throws NumericError if any evaluation is non-finite.
std::vector<Tensor> finite_diff_gradient(const std::function<double()>& loss, std::span<Tensor* const> params,
                                         double eps);

// Elementwise |a - n| / max(|a|, |n|, floor), maximised over the tensor.
// `floor` keeps coordinates whose true gradient is ~0 from dividing noise by
// noise.
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6);

}  // namespace stageseq
