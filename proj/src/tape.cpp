#include "scnn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "scnn/errors.hpp"

namespace scnn {

Tape::Node& Tape::push(Op op) {
  if (size_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[size_++];
  n.op = op;
  n.external = nullptr;
  n.grad_owner = nullptr;
  n.requires_grad = false;
  return n;
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= size_) throw std::out_of_range("tape variable is not recorded on this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= size_) throw std::out_of_range("tape variable is not recorded on this tape");
  return nodes_[v.id];
}

const Tensor& Tape::value_of(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

const Tensor& Tape::value(Var v) const {
  node(v);
  return value_of(v.id);
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.external || !n.requires_grad) return {};
  return n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

std::span<double> Tape::grad_target(std::size_t id) {
  Node& n = nodes_[id];
  if (n.external) return n.grad_owner->grad();
  return n.grad;
}

Tape::Var Tape::input(const Tensor& value) {
  Node& n = push(Op::input);
  n.value.assign_shape(value.shape());
  std::copy(value.values().begin(), value.values().end(), n.value.values().begin());
  return {size_ - 1};
}

Tape::Var Tape::parameter(Tensor& tensor, bool trainable) {
  Node& n = push(Op::parameter);
  n.external = &tensor;
  n.requires_grad = trainable;
  if (trainable) n.grad_owner = &tensor;
  return {size_ - 1};
}

Tape::Var Tape::parameter(const Tensor& tensor) {
  Node& n = push(Op::parameter);
  n.external = &tensor;
  return {size_ - 1};
}

Tape::Var Tape::conv2d(Var x, Var kernels, Var bias) {
  const auto g = ops::conv_geometry(value(x).shape(), value(kernels).shape(), value(bias).shape());
  const bool rg = requires_grad(x) || requires_grad(kernels) || requires_grad(bias);
  Node& n = push(Op::conv2d);
  n.in[0] = x.id;
  n.in[1] = kernels.id;
  n.in[2] = bias.id;
  n.conv = g;
  n.requires_grad = rg;
  n.value.assign_shape({g.out_height(), g.out_width(), g.filters});
  kernels::parallel::conv2d_forward(g, value_of(x.id).values(), value_of(kernels.id).values(),
                                    value_of(bias.id).values(), n.value.values());
  return {size_ - 1};
}

Tape::Var Tape::maxpool2x2(Var x) {
  const auto g = ops::pool_geometry(value(x).shape());
  const bool rg = requires_grad(x);
  Node& n = push(Op::maxpool);
  n.in[0] = x.id;
  n.requires_grad = rg;
  n.value.assign_shape({g.out_height(), g.out_width(), g.channels});
  n.argmax.resize(n.value.size());
  kernels::parallel::maxpool2x2_forward(g, value_of(x.id).values(), n.value.values(), n.argmax);
  return {size_ - 1};
}

Tape::Var Tape::flatten(Var x) {
  const bool rg = requires_grad(x);
  const std::size_t count = value(x).size();
  Node& n = push(Op::flatten);
  n.in[0] = x.id;
  n.requires_grad = rg;
  n.value.assign_shape({count});
  const auto src = value_of(x.id).values();
  std::copy(src.begin(), src.end(), n.value.values().begin());
  return {size_ - 1};
}

Tape::Var Tape::dense(Var x, Var weights, Var bias) {
  const Tensor& w = value(weights);
  const Tensor& b = value(bias);
  if (w.rank() != 2) throw ShapeError("dense weights must be NxM, got " + shape_string(w.shape()));
  if (w.dim(0) != value(x).size()) {
    throw ShapeError("dense weights expect " + std::to_string(w.dim(0)) + " inputs, got " +
                     std::to_string(value(x).size()));
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(1)) throw ShapeError("dense bias does not match weights");
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  const bool rg = requires_grad(x) || requires_grad(weights) || requires_grad(bias);
  // push() may reallocate the node list; re-fetch values afterwards.
  Node& n = push(Op::dense);
  n.in[0] = x.id;
  n.in[1] = weights.id;
  n.in[2] = bias.id;
  n.requires_grad = rg;
  n.value.assign_shape({cols});
  kernels::parallel::dense_forward(rows, cols, value_of(x.id).values(), value_of(weights.id).values(),
                                   value_of(bias.id).values(), n.value.values());
  return {size_ - 1};
}

Tape::Var Tape::relu(Var x) {
  const bool rg = requires_grad(x);
  const Shape shape = value(x).shape();
  Node& n = push(Op::relu);
  n.in[0] = x.id;
  n.requires_grad = rg;
  n.value.assign_shape(shape);
  const auto src = value_of(x.id).values();
  auto dst = n.value.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return {size_ - 1};
}

Tape::Var Tape::softmax(Var x) {
  const bool rg = requires_grad(x);
  Tensor out = ops::softmax(value(x));
  Node& n = push(Op::softmax);
  n.in[0] = x.id;
  n.requires_grad = rg;
  n.value = std::move(out);
  return {size_ - 1};
}

Tape::Var Tape::dropout(Var x, const ops::DropoutMask& mask) {
  if (mask.keep.size() != value(x).size()) throw ShapeError("dropout mask size does not match input");
  const bool rg = requires_grad(x);
  const Shape shape = value(x).shape();
  Node& n = push(Op::dropout);
  n.in[0] = x.id;
  n.requires_grad = rg;
  n.mask = mask;
  n.value.assign_shape(shape);
  const auto src = value_of(x.id).values();
  auto dst = n.value.values();
  const double scale = mask.scale();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = mask.keep[i] ? src[i] * scale : 0.0;
  return {size_ - 1};
}

Tape::Var Tape::cross_entropy(Var probabilities, const Tensor& target) {
  const double loss = ops::cross_entropy(value(probabilities), target);
  const bool rg = requires_grad(probabilities);
  Node& n = push(Op::cross_entropy);
  n.in[0] = probabilities.id;
  n.requires_grad = rg;
  n.aux = target;
  n.value.assign_shape({1});
  n.value[0] = loss;
  return {size_ - 1};
}

Tape::Var Tape::weighted_sum(Var x, const Tensor& weights) {
  const Tensor& v = value(x);
  if (weights.size() != v.size()) throw ShapeError("weighted_sum weights do not match input size");
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) sum += v[i] * weights[i];
  const bool rg = requires_grad(x);
  Node& n = push(Op::weighted_sum);
  n.in[0] = x.id;
  n.requires_grad = rg;
  n.aux = weights;
  n.value.assign_shape({1});
  n.value[0] = sum;
  return {size_ - 1};
}

void Tape::backward(Var loss, double seed) {
  if (size_ == 0) throw std::logic_error("backward() called without a recorded forward pass");
  const Node& root = node(loss);
  if (value_of(loss.id).size() != 1) throw ShapeError("backward() needs a scalar loss node");
  if (!root.requires_grad) return;

  for (std::size_t i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad && !n.external) {
      n.grad.assign(value_of(i).size(), 0.0);
    }
  }
  nodes_[loss.id].grad[0] = seed;

  auto wants = [this](std::size_t id) { return nodes_[id].requires_grad; };

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.external) continue;
    const std::span<const double> g = n.grad;
    switch (n.op) {
      case Op::input:
      case Op::parameter:
        break;
      case Op::conv2d: {
        if (wants(n.in[0])) {
          kernels::parallel::conv2d_backward_input(n.conv, value_of(n.in[1]).values(), g,
                                                   grad_target(n.in[0]));
        }
        if (wants(n.in[1]) || wants(n.in[2])) {
          // Weight and bias gradients come out of the same sweep; a frozen half
          // is written to a scratch buffer and discarded.
          std::vector<double> scratch_k, scratch_b;
          std::span<double> gk, gb;
          if (wants(n.in[1])) {
            gk = grad_target(n.in[1]);
          } else {
            scratch_k.assign(n.conv.kernel_size(), 0.0);
            gk = scratch_k;
          }
          if (wants(n.in[2])) {
            gb = grad_target(n.in[2]);
          } else {
            scratch_b.assign(n.conv.filters, 0.0);
            gb = scratch_b;
          }
          kernels::parallel::conv2d_backward_params(n.conv, value_of(n.in[0]).values(), g, gk, gb);
        }
        break;
      }
      case Op::maxpool:
        if (wants(n.in[0])) kernels::parallel::maxpool2x2_backward(n.argmax, g, grad_target(n.in[0]));
        break;
      case Op::flatten: {
        auto dst = grad_target(n.in[0]);
        for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
        break;
      }
      case Op::dense: {
        const Tensor& w = value_of(n.in[1]);
        const std::size_t rows = w.dim(0), cols = w.dim(1);
        if (wants(n.in[0])) {
          kernels::parallel::dense_backward_input(rows, cols, w.values(), g, grad_target(n.in[0]));
        }
        if (wants(n.in[1])) {
          std::vector<double> scratch_b;
          std::span<double> gb;
          if (wants(n.in[2])) {
            gb = grad_target(n.in[2]);
          } else {
            scratch_b.assign(cols, 0.0);
            gb = scratch_b;
          }
          kernels::parallel::dense_backward_params(rows, cols, value_of(n.in[0]).values(), g,
                                                   grad_target(n.in[1]), gb);
        } else if (wants(n.in[2])) {
          auto gb = grad_target(n.in[2]);
          for (std::size_t k = 0; k < cols; ++k) gb[k] += g[k];
        }
        break;
      }
      case Op::relu: {
        const auto out = n.value.values();
        auto dst = grad_target(n.in[0]);
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (out[k] > 0.0) dst[k] += g[k];
        }
        break;
      }
      case Op::softmax: {
        const auto p = n.value.values();
        double dot = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) dot += p[k] * g[k];
        auto dst = grad_target(n.in[0]);
        for (std::size_t k = 0; k < p.size(); ++k) dst[k] += p[k] * (g[k] - dot);
        break;
      }
      case Op::dropout: {
        auto dst = grad_target(n.in[0]);
        const double scale = n.mask.scale();
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (n.mask.keep[k]) dst[k] += g[k] * scale;
        }
        break;
      }
      case Op::cross_entropy: {
        const auto p = value_of(n.in[0]).values();
        auto dst = grad_target(n.in[0]);
        for (std::size_t k = 0; k < p.size(); ++k) {
          if (n.aux[k] != 0.0 && p[k] > ops::kProbabilityFloor) dst[k] -= g[0] * n.aux[k] / p[k];
        }
        break;
      }
      case Op::weighted_sum: {
        auto dst = grad_target(n.in[0]);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[0] * n.aux[k];
        break;
      }
    }
  }
}

}  // namespace scnn
