#include <limits>

#include "scnn/kernels.hpp"

namespace scnn::kernels::reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t K = g.kernel, C = g.channels, F = g.filters, W = g.width;
  for (std::size_t oy = 0; oy < g.out_height(); ++oy) {
    for (std::size_t ox = 0; ox < g.out_width(); ++ox) {
      for (std::size_t f = 0; f < F; ++f) {
        double sum = bias[f];
        for (std::size_t ky = 0; ky < K; ++ky) {
          for (std::size_t kx = 0; kx < K; ++kx) {
            for (std::size_t c = 0; c < C; ++c) {
              sum += input[((oy + ky) * W + ox + kx) * C + c] *
                     kernel[((ky * K + kx) * C + c) * F + f];
            }
          }
        }
        output[(oy * g.out_width() + ox) * F + f] = sum;
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  const std::size_t K = g.kernel, C = g.channels, F = g.filters, W = g.width;
  for (std::size_t oy = 0; oy < g.out_height(); ++oy) {
    for (std::size_t ox = 0; ox < g.out_width(); ++ox) {
      for (std::size_t f = 0; f < F; ++f) {
        const double d = grad_output[(oy * g.out_width() + ox) * F + f];
        for (std::size_t ky = 0; ky < K; ++ky) {
          for (std::size_t kx = 0; kx < K; ++kx) {
            for (std::size_t c = 0; c < C; ++c) {
              grad_input[((oy + ky) * W + ox + kx) * C + c] +=
                  d * kernel[((ky * K + kx) * C + c) * F + f];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_kernel,
                            std::span<double> grad_bias) {
  const std::size_t K = g.kernel, C = g.channels, F = g.filters, W = g.width;
  for (std::size_t oy = 0; oy < g.out_height(); ++oy) {
    for (std::size_t ox = 0; ox < g.out_width(); ++ox) {
      for (std::size_t f = 0; f < F; ++f) {
        const double d = grad_output[(oy * g.out_width() + ox) * F + f];
        grad_bias[f] += d;
        for (std::size_t ky = 0; ky < K; ++ky) {
          for (std::size_t kx = 0; kx < K; ++kx) {
            for (std::size_t c = 0; c < C; ++c) {
              grad_kernel[((ky * K + kx) * C + c) * F + f] +=
                  d * input[((oy + ky) * W + ox + kx) * C + c];
            }
          }
        }
      }
    }
  }
}

void maxpool2x2_forward(const PoolGeometry& g, std::span<const double> input,
                        std::span<double> output, std::span<std::uint32_t> argmax) {
  const std::size_t C = g.channels, W = g.width;
  for (std::size_t oy = 0; oy < g.out_height(); ++oy) {
    for (std::size_t ox = 0; ox < g.out_width(); ++ox) {
      for (std::size_t c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_index = 0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * oy + dy) * W + 2 * ox + dx) * C + c;
            if (input[idx] > best || (dy == 0 && dx == 0)) {
              best = input[idx];
              best_index = idx;
            }
          }
        }
        const std::size_t out = (oy * g.out_width() + ox) * C + c;
        output[out] = best;
        argmax[out] = static_cast<std::uint32_t>(best_index);
      }
    }
  }
}

void maxpool2x2_backward(std::span<const std::uint32_t> argmax,
                         std::span<const double> grad_output, std::span<double> grad_input) {
  for (std::size_t i = 0; i < grad_output.size(); ++i) grad_input[argmax[i]] += grad_output[i];
}

void dense_forward(std::size_t inputs, std::size_t outputs, std::span<const double> x,
                   std::span<const double> weights, std::span<const double> bias,
                   std::span<double> y) {
  for (std::size_t m = 0; m < outputs; ++m) {
    double sum = bias[m];
    for (std::size_t n = 0; n < inputs; ++n) sum += x[n] * weights[n * outputs + m];
    y[m] = sum;
  }
}

void dense_backward_input(std::size_t inputs, std::size_t outputs,
                          std::span<const double> weights, std::span<const double> grad_y,
                          std::span<double> grad_x) {
  for (std::size_t n = 0; n < inputs; ++n) {
    double sum = 0.0;
    for (std::size_t m = 0; m < outputs; ++m) sum += weights[n * outputs + m] * grad_y[m];
    grad_x[n] += sum;
  }
}

void dense_backward_params(std::size_t inputs, std::size_t outputs, std::span<const double> x,
                           std::span<const double> grad_y, std::span<double> grad_weights,
                           std::span<double> grad_bias) {
  for (std::size_t m = 0; m < outputs; ++m) grad_bias[m] += grad_y[m];
  for (std::size_t n = 0; n < inputs; ++n) {
    for (std::size_t m = 0; m < outputs; ++m) grad_weights[n * outputs + m] += x[n] * grad_y[m];
  }
}

}  // namespace scnn::kernels::reference
