#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scnn/tensor.hpp"

namespace scnn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Moment accumulators for a fixed list of parameter tensors.
class AdamState {
 public:
  AdamState(std::span<const Shape> shapes, AdamOptions options = {});

  const AdamOptions& options() const { return options_; }
  std::uint64_t step() const { return step_; }
  std::size_t size() const { return first_.size(); }
  std::span<const double> first_moment(std::size_t i) const { return first_[i]; }
  std::span<const double> second_moment(std::size_t i) const { return second_[i]; }

 private:
  friend struct AdamUpdater;
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

/// One parameter tensor seen by the optimizer. Frozen targets are skipped and
/// keep their moments.
struct AdamTarget {
  std::span<double> values;
  std::span<const double> grad;
  bool trainable = true;
};

/// Bias-corrected Adam update of every trainable target; advances the step
/// counter by one. Targets are matched to accumulators by position.
void adam_step(std::span<const AdamTarget> targets, AdamState& state, double learning_rate);

}  // namespace scnn
