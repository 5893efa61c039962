#pragma once

#include "dfseg/nn/autograd.hpp"

#include <vector>

namespace dfseg::nn {

struct ConvSpec {
  Index stride = 1;
  Index padding = 0;
  Index output_padding = 0;  // transposed convolution only
};

/// Output extent of a convolution along one axis.
inline Index conv_out_size(Index in, Index kernel, const ConvSpec& s) {
  return (in + 2 * s.padding - kernel) / s.stride + 1;
}
inline Index conv_transpose_out_size(Index in, Index kernel, const ConvSpec& s) {
  return (in - 1) * s.stride - 2 * s.padding + kernel + s.output_padding;
}

// Weight layout: conv2d (out, in, k, k); conv_transpose2d (in, out, k, k).
// Bias is (1, out, 1, 1) and may be undefined.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   const ConvSpec& spec = {});
template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& weight,
                             const Var<Scalar>& bias, const ConvSpec& spec = {});

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor);
template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts);

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope);
template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar>
Var<Scalar> clamp(const Var<Scalar>& x, Scalar lo, Scalar hi);

/// 2x2 window, stride 2. Spatial extents must be even.
template <typename Scalar>
Var<Scalar> max_pool2d(const Var<Scalar>& x);

/// Batch statistics when `training` (running stats updated in place),
/// running statistics otherwise.
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, bool training,
                       Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5));

/// Per-sample, per-channel normalization over H*W with affine parameters.
template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, const Var<Scalar>& gamma,
                          const Var<Scalar>& beta, Scalar eps = Scalar(1e-5));

// Scalar-valued reductions.
template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x);
/// mean((x - target)^2)
template <typename Scalar>
Var<Scalar> mean_squared_to(const Var<Scalar>& x, Scalar target);
/// mean(|a - b|)
template <typename Scalar>
Var<Scalar> mean_abs_diff(const Var<Scalar>& a, const Var<Scalar>& b);
/// Mean binary cross-entropy of logits `x` against a constant label.
template <typename Scalar>
Var<Scalar> bce_with_logits_to(const Var<Scalar>& x, Scalar target);
/// Soft Dice loss per sample, averaged over the batch:
/// 1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps).
template <typename Scalar>
Var<Scalar> dice_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target, Scalar eps);

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, b);
}

}  // namespace dfseg::nn
