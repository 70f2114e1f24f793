#include "scnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scnn/errors.hpp"

namespace scnn::ops {

kernels::ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, const Shape& bias) {
  if (input.size() != 3) throw ShapeError("conv2d input must be HxWxC, got " + shape_string(input));
  if (kernels.size() != 4 || kernels[0] != kernels[1]) {
    throw ShapeError("conv2d kernels must be KxKxCxF, got " + shape_string(kernels));
  }
  if (kernels[2] != input[2]) {
    throw ShapeError("conv2d kernel channels " + std::to_string(kernels[2]) +
                     " do not match input channels " + std::to_string(input[2]));
  }
  if (kernels[0] > input[0] || kernels[0] > input[1]) {
    throw ShapeError("conv2d kernel " + std::to_string(kernels[0]) + " exceeds input extent " +
                     shape_string(input));
  }
  if (bias.size() != 1 || bias[0] != kernels[3]) {
    throw ShapeError("conv2d bias must have " + std::to_string(kernels[3]) + " entries, got " +
                     shape_string(bias));
  }
  return {input[0], input[1], input[2], kernels[0], kernels[3]};
}

kernels::PoolGeometry pool_geometry(const Shape& input) {
  if (input.size() != 3) throw ShapeError("maxpool input must be HxWxC, got " + shape_string(input));
  if (input[0] < 2 || input[1] < 2) {
    throw ShapeError("maxpool input " + shape_string(input) + " is smaller than the 2x2 window");
  }
  return {input[0], input[1], input[2]};
}

Tensor conv2d_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  const auto g = conv_geometry(input.shape(), kernels.shape(), bias.shape());
  Tensor out({g.out_height(), g.out_width(), g.filters});
  kernels::parallel::conv2d_forward(g, input.values(), kernels.values(), bias.values(), out.values());
  return out;
}

Tensor maxpool2d(const Tensor& input) {
  const auto g = pool_geometry(input.shape());
  Tensor out({g.out_height(), g.out_width(), g.channels});
  std::vector<std::uint32_t> argmax(out.size());
  kernels::parallel::maxpool2x2_forward(g, input.values(), out.values(), argmax);
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2) throw ShapeError("dense weights must be NxM, got " + shape_string(weights.shape()));
  if (weights.dim(0) != input.size()) {
    throw ShapeError("dense weights expect " + std::to_string(weights.dim(0)) + " inputs, got " +
                     std::to_string(input.size()));
  }
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(1)) {
    throw ShapeError("dense bias must have " + std::to_string(weights.dim(1)) + " entries");
  }
  Tensor out({weights.dim(1)});
  kernels::parallel::dense_forward(weights.dim(0), weights.dim(1), input.values(), weights.values(),
                                   bias.values(), out.values());
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  out.clear_grad();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor softmax(const Tensor& input) {
  Tensor out = input;
  out.clear_grad();
  auto v = out.values();
  const double max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - max);
    sum += x;
  }
  for (double& x : v) x /= sum;
  return out;
}

void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
}

DropoutMask make_dropout_mask(std::size_t count, double rate, Rng& rng) {
  check_dropout_rate(rate);
  DropoutMask mask;
  mask.rate = rate;
  mask.keep.assign(count, 1);
  if (rate > 0.0) {
    for (auto& k : mask.keep) k = rng.uniform() >= rate ? 1 : 0;
  }
  return mask;
}

Tensor apply_dropout(const Tensor& input, const DropoutMask& mask) {
  if (mask.keep.size() != input.size()) throw ShapeError("dropout mask size does not match input");
  Tensor out = input;
  out.clear_grad();
  const double scale = mask.scale();
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask.keep[i] ? v[i] * scale : 0.0;
  return out;
}

Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training) {
  check_dropout_rate(rate);
  if (!training || rate == 0.0) {
    Tensor out = input;
    out.clear_grad();
    return out;
  }
  return apply_dropout(input, make_dropout_mask(input.size(), rate, rng));
}

double cross_entropy(const Tensor& predicted, const Tensor& target) {
  if (predicted.size() != target.size()) {
    throw ShapeError("cross_entropy: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(target.size()) + " targets");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (target[i] != 0.0) loss -= target[i] * std::log(std::max(predicted[i], kProbabilityFloor));
  }
  return loss;
}

Tensor one_hot(std::size_t classes, std::size_t index) {
  if (index >= classes) {
    throw ShapeError("class index " + std::to_string(index) + " out of range for " +
                     std::to_string(classes) + " classes");
  }
  Tensor t({classes});
  t[index] = 1.0;
  return t;
}

}  // namespace scnn::ops
