#pragma once

#include <cstdint>
#include <vector>

#include "scnn/kernels.hpp"
#include "scnn/rng.hpp"
#include "scnn/tensor.hpp"

namespace scnn::ops {

/// Clamp applied to probabilities inside the log of the cross-entropy.
inline constexpr double kProbabilityFloor = 1e-12;

/// Validates an H x W x C input against a K x K x C x F kernel and F bias.
kernels::ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, const Shape& bias);
kernels::PoolGeometry pool_geometry(const Shape& input);

/// Valid (unpadded), stride-1 convolution.
Tensor conv2d_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias);
/// 2x2 max pooling with stride 2; a trailing odd row or column is dropped.
Tensor maxpool2d(const Tensor& input);
/// y = x W + b for a flat input of length N and N x M weights.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor relu(const Tensor& input);
/// Max-subtracted softmax over all elements.
Tensor softmax(const Tensor& input);

/// Keep-mask for inverted dropout; survivors are scaled by 1 / (1 - rate).
struct DropoutMask {
  std::vector<std::uint8_t> keep;
  double rate = 0.0;

  double scale() const { return 1.0 / (1.0 - rate); }
};

void check_dropout_rate(double rate);
DropoutMask make_dropout_mask(std::size_t count, double rate, Rng& rng);
Tensor apply_dropout(const Tensor& input, const DropoutMask& mask);
/// Training mode draws a fresh mask from rng; inference mode is the identity.
Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training);

/// -sum_i target_i * ln(max(predicted_i, 1e-12)).
double cross_entropy(const Tensor& predicted, const Tensor& target);

Tensor one_hot(std::size_t classes, std::size_t index);

}  // namespace scnn::ops
