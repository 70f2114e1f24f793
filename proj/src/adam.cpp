#include "scnn/adam.hpp"

#include <cmath>
#include <string>

#include "scnn/errors.hpp"

namespace scnn {

AdamState::AdamState(std::span<const Shape> shapes, AdamOptions options) : options_(options) {
  first_.reserve(shapes.size());
  second_.reserve(shapes.size());
  for (const auto& s : shapes) {
    first_.emplace_back(shape_size(s), 0.0);
    second_.emplace_back(shape_size(s), 0.0);
  }
}

struct AdamUpdater {
  static void run(std::span<const AdamTarget> targets, AdamState& state, double lr) {
    if (targets.size() != state.first_.size()) {
      throw ShapeError("adam_step: " + std::to_string(targets.size()) + " targets for " +
                       std::to_string(state.first_.size()) + " accumulators");
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i].values.size() != state.first_[i].size() ||
          (targets[i].trainable && targets[i].grad.size() != targets[i].values.size())) {
        throw ShapeError("adam_step: target " + std::to_string(i) + " does not match its accumulator");
      }
    }
    const auto& o = state.options_;
    const std::uint64_t t = ++state.step_;
    const double correction1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const AdamTarget& target = targets[i];
      if (!target.trainable) continue;
      auto& m = state.first_[i];
      auto& v = state.second_[i];
      for (std::size_t k = 0; k < m.size(); ++k) {
        const double g = target.grad[k];
        m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g;
        v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g * g;
        const double m_hat = m[k] / correction1;
        const double v_hat = v[k] / correction2;
        target.values[k] -= lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
      }
    }
  }
};

void adam_step(std::span<const AdamTarget> targets, AdamState& state, double learning_rate) {
  AdamUpdater::run(targets, state, learning_rate);
}

}  // namespace scnn
