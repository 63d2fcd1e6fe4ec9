#include "mcg/conv.hpp"
#include "mcg/layers.hpp"
#include "mcg/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

mcg::Tensor4 random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  mcg::Tensor4 t(n, c, h, w);
  mcg::Rng rng(seed);
  for (double& v : t.values())
    v = rng.normal();
  return t;
}

void BM_ConvForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto x = random_tensor(8, c, 32, 32, 1);
  const auto k = random_tensor(c, c, 5, 5, 2);
  const mcg::ConvGeometry geo{1, 2, mcg::Padding::Zero};
  for (auto _ : state)
    benchmark::DoNotOptimize(mcg::conv2d_forward(x, k, geo));
}

void BM_ConvForwardReference(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto x = random_tensor(8, c, 32, 32, 1);
  const auto k = random_tensor(c, c, 5, 5, 2);
  const mcg::ConvGeometry geo{1, 2, mcg::Padding::Zero};
  for (auto _ : state)
    benchmark::DoNotOptimize(mcg::reference::conv2d_forward(x, k, geo));
}

void BM_ConvBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto x = random_tensor(8, c, 32, 32, 1);
  const auto k = random_tensor(c, c, 5, 5, 2);
  const auto g = random_tensor(8, c, 32, 32, 3);
  const mcg::ConvGeometry geo{1, 2, mcg::Padding::Zero};
  for (auto _ : state)
    benchmark::DoNotOptimize(mcg::conv2d_backward(g, x, k, geo));
}

void BM_ConvBackwardReference(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto x = random_tensor(8, c, 32, 32, 1);
  const auto k = random_tensor(c, c, 5, 5, 2);
  const auto g = random_tensor(8, c, 32, 32, 3);
  const mcg::ConvGeometry geo{1, 2, mcg::Padding::Zero};
  for (auto _ : state)
    benchmark::DoNotOptimize(mcg::reference::conv2d_backward(g, x, k, geo));
}

void BM_WmcgRasterCache(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  auto basis = std::make_shared<const mcg::FilterBasis>(mcg::BasisSpec{mcg::BasisKind::FourierBessel, 5, 9});
  mcg::LayerInit init;
  init.ranges = {0.0, 1.0, 6.283185307179586, 0.7853981633974483};
  for (auto _ : state)
    benchmark::DoNotOptimize(mcg::WmcgLayer(mcg::make_layer_params(basis, c, c, init, 7)));
}

} // namespace

BENCHMARK(BM_ConvForward)->Arg(4)->Arg(16);
BENCHMARK(BM_ConvForwardReference)->Arg(4)->Arg(16);
BENCHMARK(BM_ConvBackward)->Arg(4)->Arg(16);
BENCHMARK(BM_ConvBackwardReference)->Arg(4)->Arg(16);
BENCHMARK(BM_WmcgRasterCache)->Arg(4)->Arg(16);

BENCHMARK_MAIN();
