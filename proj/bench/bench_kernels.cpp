// Reference vs parallel kernels on the convolution shapes of the 224 x 224 network.
#include <benchmark/benchmark.h>

#include <vector>

#include "scnn/kernels.hpp"
#include "scnn/rng.hpp"

namespace {

using scnn::kernels::ConvGeometry;

const ConvGeometry kShapes[] = {
    {224, 224, 3, 3, 16}, {111, 111, 16, 3, 32}, {54, 54, 32, 3, 64}, {26, 26, 64, 3, 64}, {12, 12, 64, 3, 64}};

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  scnn::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

struct ConvData {
  ConvGeometry g;
  std::vector<double> input, kernel, bias, output, grad_out, grad_in, grad_k, grad_b;
  explicit ConvData(const ConvGeometry& geo)
      : g(geo),
        input(random_vector(g.input_size(), 1)),
        kernel(random_vector(g.kernel_size(), 2)),
        bias(random_vector(g.filters, 3)),
        output(g.output_size()),
        grad_out(random_vector(g.output_size(), 4)),
        grad_in(g.input_size()),
        grad_k(g.kernel_size()),
        grad_b(g.filters) {}
};

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  ConvData d(kShapes[state.range(0)]);
  for (auto _ : state) {
    if constexpr (Parallel) {
      scnn::kernels::parallel::conv2d_forward(d.g, d.input, d.kernel, d.bias, d.output);
    } else {
      scnn::kernels::reference::conv2d_forward(d.g, d.input, d.kernel, d.bias, d.output);
    }
    benchmark::DoNotOptimize(d.output.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * static_cast<double>(d.g.output_size() * d.g.patch_size()), benchmark::Counter::kIsIterationInvariantRate,
      benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_ConvBackwardInput(benchmark::State& state) {
  ConvData d(kShapes[state.range(0)]);
  for (auto _ : state) {
    if constexpr (Parallel) {
      scnn::kernels::parallel::conv2d_backward_input(d.g, d.kernel, d.grad_out, d.grad_in);
    } else {
      scnn::kernels::reference::conv2d_backward_input(d.g, d.kernel, d.grad_out, d.grad_in);
    }
    benchmark::DoNotOptimize(d.grad_in.data());
  }
}

template <bool Parallel>
void BM_ConvBackwardParams(benchmark::State& state) {
  ConvData d(kShapes[state.range(0)]);
  for (auto _ : state) {
    if constexpr (Parallel) {
      scnn::kernels::parallel::conv2d_backward_params(d.g, d.input, d.grad_out, d.grad_k, d.grad_b);
    } else {
      scnn::kernels::reference::conv2d_backward_params(d.g, d.input, d.grad_out, d.grad_k, d.grad_b);
    }
    benchmark::DoNotOptimize(d.grad_k.data());
  }
}

template <bool Parallel>
void BM_DenseForward(benchmark::State& state) {
  const std::size_t n = 6400, m = 100;
  auto x = random_vector(n, 5), w = random_vector(n * m, 6), b = random_vector(m, 7);
  std::vector<double> y(m);
  for (auto _ : state) {
    if constexpr (Parallel) {
      scnn::kernels::parallel::dense_forward(n, m, x, w, b, y);
    } else {
      scnn::kernels::reference::dense_forward(n, m, x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<false>)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<true>)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardParams<false>)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardParams<true>)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseForward<false>)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseForward<true>)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
