#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "scnn/kernels.hpp"

namespace scnn::kernels::parallel {

namespace {

// Below this many multiply-adds a kernel runs on the calling thread.
constexpr std::size_t kParallelWork = 1 << 16;

using Index = std::ptrdiff_t;

// out[r][j] = bias[j] + sum over the K x K x C window of pixel r.
template <int R, int FB>
inline void conv_tile(const double* in, std::size_t row_stride, std::size_t C, std::size_t K,
                      const double* kern, std::size_t F, const double* bias, double* out) {
  double acc[R][FB];
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < FB; ++j) acc[r][j] = bias[j];
  const std::size_t L = K * C;
  for (std::size_t ky = 0; ky < K; ++ky) {
    const double* row = in + ky * row_stride;
    const double* krow = kern + ky * L * F;
    for (std::size_t q = 0; q < L; ++q) {
      const double* kv = krow + q * F;
#pragma GCC unroll 8
      for (int r = 0; r < R; ++r) {
        const double a = row[r * C + q];
#pragma omp simd
        for (int j = 0; j < FB; ++j) acc[r][j] += a * kv[j];
      }
    }
  }
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < FB; ++j) out[r * F + j] = acc[r][j];
}

template <int FB>
void conv_forward_blocked(const ConvGeometry& g, const double* in, const double* kern,
                          const double* bias, double* out) {
  const std::size_t W = g.width, C = g.channels, K = g.kernel, F = g.filters;
  const Index Ho = static_cast<Index>(g.out_height());
  const std::size_t Wo = g.out_width();
  constexpr int R = 8;
#pragma omp parallel for schedule(static) if (g.output_size() * g.patch_size() > kParallelWork)
  for (Index oy = 0; oy < Ho; ++oy) {
    const double* in_row = in + static_cast<std::size_t>(oy) * W * C;
    double* out_row = out + static_cast<std::size_t>(oy) * Wo * F;
    for (std::size_t fb = 0; fb < F; fb += FB) {
      std::size_t ox = 0;
      for (; ox + R <= Wo; ox += R)
        conv_tile<R, FB>(in_row + ox * C, W * C, C, K, kern + fb, F, bias + fb, out_row + ox * F + fb);
      for (; ox < Wo; ++ox)
        conv_tile<1, FB>(in_row + ox * C, W * C, C, K, kern + fb, F, bias + fb, out_row + ox * F + fb);
    }
  }
}

// Accumulates the RP x FB block of dK starting at patch offset (ky, q0),
// filter fb, over every output pixel in raster order.
template <int RP, int FB>
void kernel_grad_tile(const ConvGeometry& g, const double* in, const double* dout, std::size_t ky,
                      std::size_t q0, std::size_t fb, double* dk) {
  const std::size_t W = g.width, C = g.channels, F = g.filters, L = g.kernel * C;
  const std::size_t Ho = g.out_height(), Wo = g.out_width();
  double acc[RP][FB] = {};
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    const double* in_row = in + ((oy + ky) * W) * C + q0;
    const double* d_row = dout + oy * Wo * F + fb;
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      const double* a = in_row + ox * C;
      const double* d = d_row + ox * F;
#pragma GCC unroll 8
      for (int r = 0; r < RP; ++r) {
        const double av = a[r];
#pragma omp simd
        for (int j = 0; j < FB; ++j) acc[r][j] += av * d[j];
      }
    }
  }
  for (int r = 0; r < RP; ++r)
    for (int j = 0; j < FB; ++j) dk[(ky * L + q0 + r) * F + fb + j] += acc[r][j];
}

template <int FB>
void kernel_grad_dispatch(int rows, const ConvGeometry& g, const double* in, const double* dout,
                          std::size_t ky, std::size_t q0, std::size_t fb, double* dk) {
  switch (rows) {
    case 8: kernel_grad_tile<8, FB>(g, in, dout, ky, q0, fb, dk); break;
    case 7: kernel_grad_tile<7, FB>(g, in, dout, ky, q0, fb, dk); break;
    case 6: kernel_grad_tile<6, FB>(g, in, dout, ky, q0, fb, dk); break;
    case 5: kernel_grad_tile<5, FB>(g, in, dout, ky, q0, fb, dk); break;
    case 4: kernel_grad_tile<4, FB>(g, in, dout, ky, q0, fb, dk); break;
    case 3: kernel_grad_tile<3, FB>(g, in, dout, ky, q0, fb, dk); break;
    case 2: kernel_grad_tile<2, FB>(g, in, dout, ky, q0, fb, dk); break;
    default: kernel_grad_tile<1, FB>(g, in, dout, ky, q0, fb, dk); break;
  }
}

template <int FB>
void conv_kernel_grad_blocked(const ConvGeometry& g, const double* in, const double* dout,
                              double* dk) {
  constexpr std::size_t RP = 8;
  const std::size_t L = g.kernel * g.channels;
  const std::size_t q_blocks = (L + RP - 1) / RP;
  const std::size_t f_blocks = g.filters / FB;
  const Index tasks = static_cast<Index>(g.kernel * q_blocks * f_blocks);
#pragma omp parallel for schedule(dynamic) if (g.output_size() * g.patch_size() > kParallelWork)
  for (Index t = 0; t < tasks; ++t) {
    const std::size_t task = static_cast<std::size_t>(t);
    const std::size_t fb = (task % f_blocks) * FB;
    const std::size_t qb = (task / f_blocks) % q_blocks;
    const std::size_t ky = task / (f_blocks * q_blocks);
    const std::size_t q0 = qb * RP;
    const int rows = static_cast<int>(std::min(RP, L - q0));
    kernel_grad_dispatch<FB>(rows, g, in, dout, ky, q0, fb, dk);
  }
}

// Computes the R x PB block of dPatch = dOut * K^T for R pixels starting at
// (oy, ox) and scatters it into the input gradient.
template <int R, int PB>
inline void input_grad_tile(const ConvGeometry& g, const double* dout_px, const double* kt,
                            std::size_t p0, double* din_px) {
  const std::size_t F = g.filters, P = g.patch_size(), C = g.channels;
  const std::size_t L = g.kernel * C, row_stride = g.width * C;
  double acc[R][PB] = {};
  for (std::size_t f = 0; f < F; ++f) {
    const double* kv = kt + f * P + p0;
#pragma GCC unroll 8
    for (int r = 0; r < R; ++r) {
      const double a = dout_px[r * F + f];
#pragma omp simd
      for (int j = 0; j < PB; ++j) acc[r][j] += a * kv[j];
    }
  }
  for (int j = 0; j < PB; ++j) {
    const std::size_t p = p0 + j;
    double* base = din_px + (p / L) * row_stride + p % L;
    for (int r = 0; r < R; ++r) base[r * C] += acc[r][j];
  }
}

template <int PB>
void input_grad_row(const ConvGeometry& g, const double* dout_row, const double* kt,
                    double* din_row) {
  constexpr int R = 8;
  const std::size_t F = g.filters, P = g.patch_size(), C = g.channels, Wo = g.out_width();
  const std::size_t p_main = P - P % PB;
  std::size_t ox = 0;
  for (; ox + R <= Wo; ox += R) {
    for (std::size_t p0 = 0; p0 < p_main; p0 += PB)
      input_grad_tile<R, PB>(g, dout_row + ox * F, kt, p0, din_row + ox * C);
    for (std::size_t p0 = p_main; p0 < P; ++p0)
      input_grad_tile<R, 1>(g, dout_row + ox * F, kt, p0, din_row + ox * C);
  }
  for (; ox < Wo; ++ox) {
    for (std::size_t p0 = 0; p0 < p_main; p0 += PB)
      input_grad_tile<1, PB>(g, dout_row + ox * F, kt, p0, din_row + ox * C);
    for (std::size_t p0 = p_main; p0 < P; ++p0)
      input_grad_tile<1, 1>(g, dout_row + ox * F, kt, p0, din_row + ox * C);
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t F = g.filters;
  if (F % 16 == 0)
    conv_forward_blocked<16>(g, input.data(), kernel.data(), bias.data(), output.data());
  else if (F % 8 == 0)
    conv_forward_blocked<8>(g, input.data(), kernel.data(), bias.data(), output.data());
  else if (F % 4 == 0)
    conv_forward_blocked<4>(g, input.data(), kernel.data(), bias.data(), output.data());
  else
    conv_forward_blocked<1>(g, input.data(), kernel.data(), bias.data(), output.data());
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  const std::size_t P = g.patch_size(), F = g.filters, K = g.kernel;
  std::vector<double> kt(P * F);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t f = 0; f < F; ++f) kt[f * P + p] = kernel[p * F + f];

  const std::size_t Wo = g.out_width(), row_in = g.width * g.channels;
  const Index Ho = static_cast<Index>(g.out_height());
  const bool go_parallel = g.output_size() * P > kParallelWork;
  // Rows in the same phase (oy mod K) write disjoint input rows.
  for (std::size_t phase = 0; phase < K; ++phase) {
#pragma omp parallel for schedule(static) if (go_parallel)
    for (Index oy = static_cast<Index>(phase); oy < Ho; oy += static_cast<Index>(K)) {
      const double* dout_row = grad_output.data() + static_cast<std::size_t>(oy) * Wo * F;
      double* din_row = grad_input.data() + static_cast<std::size_t>(oy) * row_in;
      if (P % 16 == 0)
        input_grad_row<16>(g, dout_row, kt.data(), din_row);
      else
        input_grad_row<8>(g, dout_row, kt.data(), din_row);
    }
  }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_output, std::span<double> grad_kernel,
                            std::span<double> grad_bias) {
  const std::size_t F = g.filters;
  if (F % 16 == 0)
    conv_kernel_grad_blocked<16>(g, input.data(), grad_output.data(), grad_kernel.data());
  else if (F % 8 == 0)
    conv_kernel_grad_blocked<8>(g, input.data(), grad_output.data(), grad_kernel.data());
  else if (F % 4 == 0)
    conv_kernel_grad_blocked<4>(g, input.data(), grad_output.data(), grad_kernel.data());
  else
    conv_kernel_grad_blocked<1>(g, input.data(), grad_output.data(), grad_kernel.data());

  const std::size_t pixels = g.out_height() * g.out_width();
  std::vector<double> bias_acc(F, 0.0);
  for (std::size_t px = 0; px < pixels; ++px) {
    const double* d = grad_output.data() + px * F;
#pragma omp simd
    for (std::size_t f = 0; f < F; ++f) bias_acc[f] += d[f];
  }
  for (std::size_t f = 0; f < F; ++f) grad_bias[f] += bias_acc[f];
}

void maxpool2x2_forward(const PoolGeometry& g, std::span<const double> input,
                        std::span<double> output, std::span<std::uint32_t> argmax) {
  const std::size_t C = g.channels, W = g.width, Wo = g.out_width();
  const Index Ho = static_cast<Index>(g.out_height());
#pragma omp parallel for schedule(static) if (g.output_size() > kParallelWork)
  for (Index oy_i = 0; oy_i < Ho; ++oy_i) {
    const std::size_t oy = static_cast<std::size_t>(oy_i);
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      const std::size_t i00 = ((2 * oy) * W + 2 * ox) * C;
      const std::size_t i01 = i00 + C;
      const std::size_t i10 = i00 + W * C;
      const std::size_t i11 = i10 + C;
      double* out = output.data() + (oy * Wo + ox) * C;
      std::uint32_t* arg = argmax.data() + (oy * Wo + ox) * C;
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = i00 + c;
        if (input[i01 + c] > input[best]) best = i01 + c;
        if (input[i10 + c] > input[best]) best = i10 + c;
        if (input[i11 + c] > input[best]) best = i11 + c;
        out[c] = input[best];
        arg[c] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void maxpool2x2_backward(std::span<const std::uint32_t> argmax,
                         std::span<const double> grad_output, std::span<double> grad_input) {
  // Windows do not overlap, so every input index is hit at most once.
  const Index n = static_cast<Index>(grad_output.size());
#pragma omp parallel for schedule(static) if (grad_output.size() > kParallelWork)
  for (Index i = 0; i < n; ++i) grad_input[argmax[i]] += grad_output[i];
}

void dense_forward(std::size_t inputs, std::size_t outputs, std::span<const double> x,
                   std::span<const double> weights, std::span<const double> bias,
                   std::span<double> y) {
  constexpr std::size_t MB = 32;
  const Index blocks = static_cast<Index>((outputs + MB - 1) / MB);
#pragma omp parallel for schedule(static) if (inputs * outputs > kParallelWork)
  for (Index b = 0; b < blocks; ++b) {
    const std::size_t m0 = static_cast<std::size_t>(b) * MB;
    const std::size_t width = std::min(MB, outputs - m0);
    double acc[MB];
    for (std::size_t j = 0; j < width; ++j) acc[j] = bias[m0 + j];
    for (std::size_t n = 0; n < inputs; ++n) {
      const double xn = x[n];
      const double* w = weights.data() + n * outputs + m0;
#pragma omp simd
      for (std::size_t j = 0; j < width; ++j) acc[j] += xn * w[j];
    }
    for (std::size_t j = 0; j < width; ++j) y[m0 + j] = acc[j];
  }
}

void dense_backward_input(std::size_t inputs, std::size_t outputs,
                          std::span<const double> weights, std::span<const double> grad_y,
                          std::span<double> grad_x) {
  const Index n_in = static_cast<Index>(inputs);
#pragma omp parallel for schedule(static) if (inputs * outputs > kParallelWork)
  for (Index n = 0; n < n_in; ++n) {
    const double* w = weights.data() + static_cast<std::size_t>(n) * outputs;
    double sum = 0.0;
#pragma omp simd reduction(+ : sum)
    for (std::size_t m = 0; m < outputs; ++m) sum += w[m] * grad_y[m];
    grad_x[n] += sum;
  }
}

void dense_backward_params(std::size_t inputs, std::size_t outputs, std::span<const double> x,
                           std::span<const double> grad_y, std::span<double> grad_weights,
                           std::span<double> grad_bias) {
  for (std::size_t m = 0; m < outputs; ++m) grad_bias[m] += grad_y[m];
  const Index n_in = static_cast<Index>(inputs);
#pragma omp parallel for schedule(static) if (inputs * outputs > kParallelWork)
  for (Index n = 0; n < n_in; ++n) {
    const double xn = x[n];
    if (xn == 0.0) continue;
    double* gw = grad_weights.data() + static_cast<std::size_t>(n) * outputs;
#pragma omp simd
    for (std::size_t m = 0; m < outputs; ++m) gw[m] += xn * grad_y[m];
  }
}

}  // namespace scnn::kernels::parallel
