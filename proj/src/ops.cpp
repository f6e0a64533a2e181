#include "stageseq/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "stageseq/error.hpp"

namespace stageseq {

Tensor affine(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2 || x.rank() != 1 || bias.rank() != 1) {
    throw DimensionError("affine expects vector x, matrix W and vector b");
  }
  const std::size_t rows = weights.dim(0);
  const std::size_t cols = weights.dim(1);
  if (x.size() != cols || bias.size() != rows) {
    throw DimensionError("affine: W is " + shape_string(weights.shape()) + ", x is " + shape_string(x.shape()) +
                         ", b is " + shape_string(bias.shape()));
  }
  Tensor out({rows});
  affine_into(x.values(), weights, bias.values(), out.values());
  return out;
}

void affine_into(std::span<const double> x, const Tensor& weights, std::span<const double> bias,
                 std::span<double> out) {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto rows = static_cast<Eigen::Index>(weights.dim(0));
  const auto cols = static_cast<Eigen::Index>(weights.dim(1));
  Eigen::Map<const Matrix> w(weights.data(), rows, cols);
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), cols);
  Eigen::Map<Eigen::VectorXd> o(out.data(), rows);
  o = Eigen::Map<const Eigen::VectorXd>(bias.data(), rows);
  o.noalias() += w * xv;
}

void affine_transpose_accumulate(std::span<const double> grad_out, const Tensor& weights, std::span<double> out) {
  const std::size_t rows = weights.dim(0);
  const std::size_t cols = weights.dim(1);
  const double* w = weights.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = grad_out[r];
    if (g == 0.0) continue;
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += g * row[c];
  }
}

void affine_weight_grad_accumulate(std::span<const double> grad_out, std::span<const double> x, Tensor& grad_weights,
                                   std::span<double> grad_bias) {
  const std::size_t rows = grad_weights.dim(0);
  const std::size_t cols = grad_weights.dim(1);
  double* gw = grad_weights.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = grad_out[r];
    grad_bias[r] += g;
    if (g == 0.0) continue;
    double* row = gw + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += g * x[c];
  }
}

void softmax_inplace(std::span<double> values) {
  if (values.empty()) return;
  const double peak = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double& v : values) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : values) v /= total;
}

Tensor softmax(const Tensor& logits) {
  Tensor out = logits;
  softmax_inplace(out.values());
  return out;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

namespace {

template <typename Fn>
Tensor map_values(const Tensor& x, Fn fn) {
  Tensor out = x;
  for (double& v : out.values()) v = fn(v);
  return out;
}

}  // namespace

Tensor sigmoid(const Tensor& x) { return map_values(x, [](double v) { return sigmoid(v); }); }
Tensor tanh(const Tensor& x) { return map_values(x, [](double v) { return std::tanh(v); }); }
Tensor relu(const Tensor& x) { return map_values(x, [](double v) { return relu(v); }); }

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

struct ConvGeometry {
  std::size_t height, width, in_channels, kernel, out_channels, out_height, out_width;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  if (input.rank() != 3 || kernels.rank() != 4 || bias.rank() != 1) {
    throw DimensionError("conv2d expects an H×W×c input, k×k×c_in×c_out kernels and a bias vector");
  }
  ConvGeometry g{};
  g.height = input.dim(0);
  g.width = input.dim(1);
  g.in_channels = input.dim(2);
  g.kernel = kernels.dim(0);
  g.out_channels = kernels.dim(3);
  if (kernels.dim(1) != g.kernel || kernels.dim(2) != g.in_channels || bias.size() != g.out_channels) {
    throw DimensionError("conv2d: kernels " + shape_string(kernels.shape()) + " incompatible with input " +
                         shape_string(input.shape()) + " and bias " + shape_string(bias.shape()));
  }
  if (g.kernel > g.height || g.kernel > g.width) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kernel) + " larger than image " +
                         shape_string(input.shape()));
  }
  g.out_height = g.height - g.kernel + 1;
  g.out_width = g.width - g.kernel + 1;
  return g;
}

}  // namespace

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// One row per output pixel; each kernel row of a patch is contiguous in HWC.
void im2col(const ConvGeometry& g, const double* in, RowMatrix& patches) {
  const std::size_t span_len = g.kernel * g.in_channels;
  patches.resize(static_cast<Eigen::Index>(g.out_height * g.out_width),
                 static_cast<Eigen::Index>(g.kernel * span_len));
  double* dst = patches.data();
  for (std::size_t y = 0; y < g.out_height; ++y) {
    for (std::size_t x = 0; x < g.out_width; ++x) {
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        const double* src = in + ((y + ky) * g.width + x) * g.in_channels;
        for (std::size_t t = 0; t < span_len; ++t) dst[t] = src[t];
        dst += span_len;
      }
    }
  }
}

thread_local RowMatrix t_patches;
thread_local RowMatrix t_patch_grad;

// Channel blocks of kLanes outputs are accumulated in registers; the generic
// loop handles the remaining channels one at a time.
constexpr std::size_t kLanes = 8;
constexpr std::size_t kRowBlock = 4;

template <std::size_t Lanes>
using Lane = Eigen::Array<double, static_cast<int>(Lanes), 1>;

template <std::size_t Lanes>
void forward_block(const double* patches, std::size_t pixels, std::size_t taps, const double* ker,
                   std::size_t co_n, std::size_t c0, const double* bias, double* out) {
  using V = Lane<Lanes>;
  const V b = Eigen::Map<const V>(bias + c0);
  std::size_t p = 0;
  for (; p + kRowBlock <= pixels; p += kRowBlock) {
    V acc0 = b, acc1 = b, acc2 = b, acc3 = b;
    const double* rows = patches + p * taps;
    for (std::size_t t = 0; t < taps; ++t) {
      const V kv = Eigen::Map<const V>(ker + t * co_n + c0);
      acc0 += rows[t] * kv;
      acc1 += rows[taps + t] * kv;
      acc2 += rows[2 * taps + t] * kv;
      acc3 += rows[3 * taps + t] * kv;
    }
    Eigen::Map<V>(out + p * co_n + c0) = acc0;
    Eigen::Map<V>(out + (p + 1) * co_n + c0) = acc1;
    Eigen::Map<V>(out + (p + 2) * co_n + c0) = acc2;
    Eigen::Map<V>(out + (p + 3) * co_n + c0) = acc3;
  }
  for (; p < pixels; ++p) {
    V acc = b;
    const double* row = patches + p * taps;
    for (std::size_t t = 0; t < taps; ++t) acc += row[t] * Eigen::Map<const V>(ker + t * co_n + c0);
    Eigen::Map<V>(out + p * co_n + c0) = acc;
  }
}

template <std::size_t Lanes>
void kernel_grad_block(const double* patches, std::size_t pixels, std::size_t taps, const double* grad_out,
                       std::size_t co_n, std::size_t c0, double* grad_ker) {
  using V = Lane<Lanes>;
  std::size_t t = 0;
  for (; t + kRowBlock <= taps; t += kRowBlock) {
    V acc0 = V::Zero(), acc1 = V::Zero(), acc2 = V::Zero(), acc3 = V::Zero();
    for (std::size_t p = 0; p < pixels; ++p) {
      const V gv = Eigen::Map<const V>(grad_out + p * co_n + c0);
      const double* row = patches + p * taps + t;
      acc0 += row[0] * gv;
      acc1 += row[1] * gv;
      acc2 += row[2] * gv;
      acc3 += row[3] * gv;
    }
    Eigen::Map<V>(grad_ker + t * co_n + c0) += acc0;
    Eigen::Map<V>(grad_ker + (t + 1) * co_n + c0) += acc1;
    Eigen::Map<V>(grad_ker + (t + 2) * co_n + c0) += acc2;
    Eigen::Map<V>(grad_ker + (t + 3) * co_n + c0) += acc3;
  }
  for (; t < taps; ++t) {
    V acc = V::Zero();
    for (std::size_t p = 0; p < pixels; ++p)
      acc += patches[p * taps + t] * Eigen::Map<const V>(grad_out + p * co_n + c0);
    Eigen::Map<V>(grad_ker + t * co_n + c0) += acc;
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  const ConvGeometry g = conv_geometry(input, kernels, bias);
  Tensor out({g.out_height, g.out_width, g.out_channels});
  im2col(g, input.data(), t_patches);
  const std::size_t pixels = g.out_height * g.out_width;
  const std::size_t taps = static_cast<std::size_t>(t_patches.cols());
  const std::size_t co_n = g.out_channels;
  std::size_t c0 = 0;
  for (; c0 + kLanes <= co_n; c0 += kLanes)
    forward_block<kLanes>(t_patches.data(), pixels, taps, kernels.data(), co_n, c0, bias.data(), out.data());
  for (; c0 < co_n; ++c0)
    forward_block<1>(t_patches.data(), pixels, taps, kernels.data(), co_n, c0, bias.data(), out.data());
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_output, Tensor& grad_kernels,
                     Tensor& grad_bias, Tensor* grad_input) {
  const ConvGeometry g = conv_geometry(input, kernels, grad_bias);
  require_same_shape(grad_kernels, kernels, "conv2d_backward kernel gradient");
  if (grad_output.shape() != std::vector<std::size_t>{g.out_height, g.out_width, g.out_channels}) {
    throw DimensionError("conv2d_backward: output gradient has shape " + shape_string(grad_output.shape()));
  }
  if (grad_input) require_same_shape(*grad_input, input, "conv2d_backward input gradient");
  im2col(g, input.data(), t_patches);
  const std::size_t pixels = g.out_height * g.out_width;
  const std::size_t taps = static_cast<std::size_t>(t_patches.cols());
  const std::size_t co_n = g.out_channels;
  const double* go_data = grad_output.data();
  std::size_t c0 = 0;
  for (; c0 + kLanes <= co_n; c0 += kLanes)
    kernel_grad_block<kLanes>(t_patches.data(), pixels, taps, go_data, co_n, c0, grad_kernels.data());
  for (; c0 < co_n; ++c0)
    kernel_grad_block<1>(t_patches.data(), pixels, taps, go_data, co_n, c0, grad_kernels.data());
  double* gb = grad_bias.data();
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t c = 0; c < co_n; ++c) gb[c] += go_data[p * co_n + c];
  const auto rows = static_cast<Eigen::Index>(pixels);
  const auto cols = static_cast<Eigen::Index>(co_n);
  ConstMap go(go_data, rows, cols);
  if (!grad_input) return;

  ConstMap k(kernels.data(), static_cast<Eigen::Index>(taps), cols);
  t_patch_grad.noalias() = go * k.transpose();
  grad_input->fill(0.0);
  double* gi = grad_input->data();
  const double* src = t_patch_grad.data();
  const std::size_t span_len = g.kernel * g.in_channels;
  for (std::size_t y = 0; y < g.out_height; ++y) {
    for (std::size_t x = 0; x < g.out_width; ++x) {
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        double* dst = gi + ((y + ky) * g.width + x) * g.in_channels;
        for (std::size_t t = 0; t < span_len; ++t) dst[t] += src[t];
        src += span_len;
      }
    }
  }
}

PoolResult maxpool2(const Tensor& input) {
  if (input.rank() != 3) throw DimensionError("maxpool2 expects an H×W×c map");
  const std::size_t height = input.dim(0);
  const std::size_t width = input.dim(1);
  const std::size_t channels = input.dim(2);
  if (height < 2 || width < 2) throw DimensionError("maxpool2: map " + shape_string(input.shape()) + " too small");
  const std::size_t out_h = height / 2;
  const std::size_t out_w = width / 2;
  PoolResult result{Tensor({out_h, out_w, channels}), std::vector<std::size_t>(out_h * out_w * channels)};
  const double* in = input.data();
  double* out = result.output.data();
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t best = ((2 * y) * width + 2 * x) * channels + c;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * y + dy) * width + 2 * x + dx) * channels + c;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (y * out_w + x) * channels + c;
        out[o] = in[best];
        result.source_index[o] = best;
      }
    }
  }
  return result;
}

Tensor maxpool2_backward(const Tensor& grad_output, std::span<const std::size_t> source_index,
                         const std::vector<std::size_t>& input_shape) {
  if (grad_output.size() != source_index.size()) {
    throw DimensionError("maxpool2_backward: gradient and index sizes differ");
  }
  Tensor grad_input(input_shape);
  for (std::size_t i = 0; i < source_index.size(); ++i) grad_input[source_index[i]] += grad_output[i];
  return grad_input;
}

}  // namespace stageseq
