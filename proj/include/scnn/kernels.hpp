#pragma once

// Raw compute kernels behind the tensor operators. Layouts:
//   image / feature map  H x W x C   (row-major, channel fastest)
//   conv kernel          K x K x C x F
//   dense weights        N x M       (input index major)
//
// Two implementations share these signatures. `reference` is a direct, serial
// transcription of the defining sums and exists to check `parallel`, which is
// register-blocked and OpenMP-parallel. Every `parallel` kernel assigns each
// output element to exactly one thread and accumulates it in a fixed order, so
// results do not depend on the thread count.
//
// Backward kernels accumulate (+=) into their outputs.

#include <cstddef>
#include <cstdint>
#include <span>

namespace scnn::kernels {

struct ConvGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t filters = 0;

  std::size_t out_height() const { return height - kernel + 1; }
  std::size_t out_width() const { return width - kernel + 1; }
  std::size_t patch_size() const { return kernel * kernel * channels; }
  std::size_t input_size() const { return height * width * channels; }
  std::size_t output_size() const { return out_height() * out_width() * filters; }
  std::size_t kernel_size() const { return patch_size() * filters; }
};

struct PoolGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t out_height() const { return height / 2; }
  std::size_t out_width() const { return width / 2; }
  std::size_t output_size() const { return out_height() * out_width() * channels; }
};

#define SCNN_KERNEL_DECLS                                                                     \
  void conv2d_forward(const ConvGeometry& g, std::span<const double> input,                  \
                      std::span<const double> kernel, std::span<const double> bias,          \
                      std::span<double> output);                                             \
  void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,          \
                             std::span<const double> grad_output,                            \
                             std::span<double> grad_input);                                  \
  void conv2d_backward_params(const ConvGeometry& g, std::span<const double> input,          \
                              std::span<const double> grad_output,                           \
                              std::span<double> grad_kernel, std::span<double> grad_bias);   \
  /* argmax receives the flat input index of each window maximum (first wins ties). */       \
  void maxpool2x2_forward(const PoolGeometry& g, std::span<const double> input,              \
                          std::span<double> output, std::span<std::uint32_t> argmax);        \
  void maxpool2x2_backward(std::span<const std::uint32_t> argmax,                            \
                           std::span<const double> grad_output, std::span<double> grad_input); \
  void dense_forward(std::size_t inputs, std::size_t outputs, std::span<const double> x,      \
                     std::span<const double> weights, std::span<const double> bias,          \
                     std::span<double> y);                                                   \
  void dense_backward_input(std::size_t inputs, std::size_t outputs,                         \
                            std::span<const double> weights, std::span<const double> grad_y, \
                            std::span<double> grad_x);                                       \
  void dense_backward_params(std::size_t inputs, std::size_t outputs,                        \
                             std::span<const double> x, std::span<const double> grad_y,      \
                             std::span<double> grad_weights, std::span<double> grad_bias);

namespace reference {
SCNN_KERNEL_DECLS
}  // namespace reference

namespace parallel {
SCNN_KERNEL_DECLS
}  // namespace parallel

#undef SCNN_KERNEL_DECLS

}  // namespace scnn::kernels
