// Parallel (im2col + BLAS, OpenMP) kernels against the serial reference loops
// on the layer shapes of the 32x32 and 64x64 encoders.

#include <benchmark/benchmark.h>

#include <vector>

#include "adnl/kernels.hpp"
#include "adnl/reference_kernels.hpp"
#include "adnl/rng.hpp"

namespace {

using adnl::kernels::ConvGeometry;

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  adnl::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(adnl::uniform(rng, -1, 1));
  return v;
}

// args: batch, in_channels, out_channels, spatial size
ConvGeometry geometry(const benchmark::State& s) {
  return {static_cast<int>(s.range(0)), static_cast<int>(s.range(1)), static_cast<int>(s.range(2)),
          static_cast<int>(s.range(3)), static_cast<int>(s.range(3))};
}

std::size_t conv_flops(const ConvGeometry& g) {
  return 2ull * g.batch * g.out_channels * g.conv_out_h() * g.conv_out_w() * g.in_channels * g.kernel * g.kernel;
}

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const auto x = random_values(static_cast<std::size_t>(g.batch) * g.in_channels * g.in_h * g.in_w, 1);
  const auto w = random_values(static_cast<std::size_t>(g.out_channels) * g.in_channels * 16, 2);
  std::vector<float> y(static_cast<std::size_t>(g.batch) * g.out_channels * g.conv_out_h() * g.conv_out_w());
  for (auto _ : state) {
    if constexpr (Parallel) {
      adnl::kernels::conv2d_forward(g, x, w, {}, y);
    } else {
      adnl::reference::conv2d_forward<float>(g, x, w, {}, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(static_cast<double>(conv_flops(g)) * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

template <bool Parallel>
void BM_Conv2dBackward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const auto x = random_values(static_cast<std::size_t>(g.batch) * g.in_channels * g.in_h * g.in_w, 1);
  const auto w = random_values(static_cast<std::size_t>(g.out_channels) * g.in_channels * 16, 2);
  const auto dy =
      random_values(static_cast<std::size_t>(g.batch) * g.out_channels * g.conv_out_h() * g.conv_out_w(), 3);
  std::vector<float> dx(x.size()), dw(w.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      adnl::kernels::conv2d_backward(g, x, w, dy, dx, dw, {});
    } else {
      adnl::reference::conv2d_backward<float>(g, x, w, dy, dx, dw, {});
    }
    benchmark::DoNotOptimize(dx.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * static_cast<double>(conv_flops(g)) * state.iterations() / 1e9,
                                                 benchmark::Counter::kIsRate);
}

template <bool Parallel>
void BM_ConvTranspose2dForward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const auto x = random_values(static_cast<std::size_t>(g.batch) * g.in_channels * g.in_h * g.in_w, 1);
  const auto w = random_values(static_cast<std::size_t>(g.in_channels) * g.out_channels * 16, 2);
  std::vector<float> y(static_cast<std::size_t>(g.batch) * g.out_channels * g.transposed_out_h() *
                       g.transposed_out_w());
  for (auto _ : state) {
    if constexpr (Parallel) {
      adnl::kernels::conv_transpose2d_forward(g, x, w, {}, y);
    } else {
      adnl::reference::conv_transpose2d_forward<float>(g, x, w, {}, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_LinearForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0)), in = static_cast<int>(state.range(1)),
            out = static_cast<int>(state.range(2));
  const auto x = random_values(static_cast<std::size_t>(batch) * in, 1);
  const auto w = random_values(static_cast<std::size_t>(out) * in, 2);
  std::vector<float> y(static_cast<std::size_t>(batch) * out);
  for (auto _ : state) {
    if constexpr (Parallel) {
      adnl::kernels::linear_forward(batch, in, out, x, w, {}, y);
    } else {
      adnl::reference::linear_forward<float>(batch, in, out, x, w, {}, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  // Encoder layers at batch 32: 1x32x32 input, then 64 -> 128 -> 256 channels.
  b->Args({32, 1, 64, 32})->Args({32, 64, 128, 16})->Args({32, 128, 256, 8});
  // First two layers of the 64x64 encoder.
  b->Args({32, 3, 64, 64})->Args({32, 64, 128, 32});
}

void transposed_shapes(benchmark::internal::Benchmark* b) {
  // Decoder layers: in_* is the small side.
  b->Args({32, 256, 128, 4})->Args({32, 128, 64, 8})->Args({32, 64, 1, 16});
}

}  // namespace

BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d_forward/parallel")->Apply(conv_shapes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d_forward/reference")->Apply(conv_shapes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackward<true>)->Name("conv2d_backward/parallel")->Apply(conv_shapes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackward<false>)->Name("conv2d_backward/reference")->Apply(conv_shapes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTranspose2dForward<true>)
    ->Name("conv_transpose2d_forward/parallel")
    ->Apply(transposed_shapes)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTranspose2dForward<false>)
    ->Name("conv_transpose2d_forward/reference")
    ->Apply(transposed_shapes)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinearForward<true>)->Name("linear_forward/parallel")->Args({128, 4096, 128})->Args({256, 128, 512});
BENCHMARK(BM_LinearForward<false>)->Name("linear_forward/reference")->Args({128, 4096, 128})->Args({256, 128, 512});

BENCHMARK_MAIN();
