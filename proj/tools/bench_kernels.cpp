#include <benchmark/benchmark.h>

#include <random>

#include "tergan/kernels.hpp"
#include "tergan/reference_kernels.hpp"

using namespace tergan;

namespace {

Tensor random(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Arguments: batch, side, input channels, output channels.
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 32, 3, 8})->Args({16, 16, 16, 32})->Args({16, 4, 64, 128})->Unit(benchmark::kMillisecond);
}

template <bool Parallel>
void BM_conv_forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), s = static_cast<std::size_t>(state.range(1)),
             ci = static_cast<std::size_t>(state.range(2)), co = static_cast<std::size_t>(state.range(3));
  const auto x = random({n, s, s, ci}, 1), w = random({3, 3, ci, co}, 2), b = random({co}, 3);
  for (auto _ : state) {
    if constexpr (Parallel)
      benchmark::DoNotOptimize(kernels::conv3x3_forward(x, w, b));
    else
      benchmark::DoNotOptimize(kernels::reference::conv3x3_forward(x, w, b));
  }
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), s = static_cast<std::size_t>(state.range(1)),
             ci = static_cast<std::size_t>(state.range(2)), co = static_cast<std::size_t>(state.range(3));
  const auto x = random({n, s, s, ci}, 1), w = random({3, 3, ci, co}, 2), g = random({n, s, s, co}, 4);
  Tensor gw(w.shape()), gb({co});
  for (auto _ : state) {
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(kernels::conv3x3_backward_input(g, w));
      kernels::conv3x3_backward_params(x, g, gw, gb);
    } else {
      benchmark::DoNotOptimize(kernels::reference::conv3x3_backward_input(g, w));
      kernels::reference::conv3x3_backward_params(x, g, gw, gb);
    }
  }
}

template <bool Parallel>
void BM_linear(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), i = static_cast<std::size_t>(state.range(1)),
             o = static_cast<std::size_t>(state.range(2));
  const auto x = random({n, i}, 1), w = random({i, o}, 2), b = random({o}, 3);
  for (auto _ : state) {
    if constexpr (Parallel)
      benchmark::DoNotOptimize(kernels::linear_forward(x, w, b));
    else
      benchmark::DoNotOptimize(kernels::reference::linear_forward(x, w, b));
  }
}

template <bool Parallel>
void BM_moments(benchmark::State& state) {
  const auto x = random({16, 32, 32, static_cast<std::size_t>(state.range(0))}, 5);
  std::vector<float> mean, var;
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::channel_moments(x, mean, var);
    else
      kernels::reference::channel_moments(x, mean, var);
    benchmark::DoNotOptimize(mean.data());
  }
}

}  // namespace

BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/parallel")->Apply(conv_args);
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/reference")->Apply(conv_args);
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/parallel")->Apply(conv_args);
BENCHMARK(BM_linear<false>)->Name("linear/reference")->Args({64, 2048, 128})->Args({64, 80, 2048});
BENCHMARK(BM_linear<true>)->Name("linear/parallel")->Args({64, 2048, 128})->Args({64, 80, 2048});
BENCHMARK(BM_moments<false>)->Name("moments/reference")->Arg(8)->Arg(64);
BENCHMARK(BM_moments<true>)->Name("moments/parallel")->Arg(8)->Arg(64);

BENCHMARK_MAIN();
