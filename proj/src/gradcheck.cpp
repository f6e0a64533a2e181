#include "stageseq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stageseq/error.hpp"

namespace stageseq {

std::vector<Tensor> finite_diff_gradient(const std::function<double()>& loss, std::span<Tensor* const> params,
                                         double eps) {
  if (!(eps > 0.0)) throw ArgumentError("finite-difference step must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Tensor* param : params) {
    Tensor grad(param->shape());
    for (std::size_t i = 0; i < param->size(); ++i) {
      const double saved = (*param)[i];
      (*param)[i] = saved + eps;
      const double plus = loss();
      (*param)[i] = saved - eps;
      const double minus = loss();
      (*param)[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("finite_diff_gradient: non-finite loss at coordinate " + std::to_string(i));
      }
      grad[i] = (plus - minus) / (2.0 * eps);
    }
    grads.push_back(std::move(grad));
  }
  return grads;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  require_same_shape(analytic, numeric, "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    if (!std::isfinite(a) || !std::isfinite(n)) return std::numeric_limits<double>::infinity();
    const double scale = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / scale);
  }
  return worst;
}

}  // namespace stageseq
