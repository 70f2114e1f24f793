#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "scnn/ops.hpp"
#include "scnn/tensor.hpp"

namespace scnn {

/// Records a forward computation as a linear list of operations and replays
/// it in reverse to compute gradients.
///
/// Parameters are referenced, not copied: `parameter()` keeps a pointer to the
/// caller's tensor, and `backward()` accumulates into that tensor's grad slot
/// when it was registered as trainable. Intermediate gradients live on the tape.
///
/// `clear()` forgets the recorded graph but keeps every buffer, so replaying the
/// same architecture sample after sample does not reallocate.
class Tape {
 public:
  struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
  };

  Var input(const Tensor& value);
  Var parameter(Tensor& tensor, bool trainable);
  /// Read-only parameter; never receives a gradient.
  Var parameter(const Tensor& tensor);

  Var conv2d(Var x, Var kernels, Var bias);
  Var maxpool2x2(Var x);
  Var flatten(Var x);
  Var dense(Var x, Var weights, Var bias);
  Var relu(Var x);
  Var softmax(Var x);
  Var dropout(Var x, const ops::DropoutMask& mask);
  /// Scalar cross-entropy of a probability vector against a target distribution.
  Var cross_entropy(Var probabilities, const Tensor& target);
  /// Scalar sum(x * weights); a generic probe loss for gradient checks.
  Var weighted_sum(Var x, const Tensor& weights);

  /// Propagates d(loss)/d(node) from a scalar node. `seed` scales the result
  /// (e.g. 1/batch for a batch mean). Throws if nothing was recorded.
  void backward(Var loss, double seed = 1.0);

  const Tensor& value(Var v) const;
  /// Gradient of a non-parameter node from the last backward(); empty if none.
  std::span<const double> grad(Var v) const;
  bool requires_grad(Var v) const;

  std::size_t size() const { return size_; }
  void clear() { size_ = 0; }

 private:
  enum class Op : std::uint8_t {
    input, parameter, conv2d, maxpool, flatten, dense, relu, softmax, dropout, cross_entropy, weighted_sum
  };

  struct Node {
    Op op = Op::input;
    std::size_t in[3] = {0, 0, 0};
    Tensor value;
    const Tensor* external = nullptr;
    Tensor* grad_owner = nullptr;
    bool requires_grad = false;
    std::vector<double> grad;
    std::vector<std::uint32_t> argmax;
    ops::DropoutMask mask;
    Tensor aux;
    kernels::ConvGeometry conv;
  };

  Node& push(Op op);
  Node& node(Var v);
  const Node& node(Var v) const;
  const Tensor& value_of(std::size_t id) const;
  std::span<double> grad_target(std::size_t id);

  std::vector<Node> nodes_;
  std::size_t size_ = 0;
};

}  // namespace scnn
