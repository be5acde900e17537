#include <benchmark/benchmark.h>

#include <random>

#include "spg/models.hpp"
#include "spg/synth.hpp"
#include "spg/train.hpp"

namespace spg {
namespace {

Tensor<float> noise(Shape s, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor<float> t(s);
  for (auto& v : t.values()) v = u(gen);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), size = static_cast<int>(state.range(1));
  Var<float> x(noise({4, c, size, size}, 1)), w(noise({c, c, 3, 3}, 2)), b(noise({1, c, 1, 1}, 3));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1).value().data());
  state.SetItemsProcessed(state.iterations() * 4LL * c * c * 9 * size * size);
}
BENCHMARK(BM_Conv2dForward)->Args({16, 64})->Args({32, 32})->Args({64, 16});

void BM_Conv2dBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), size = static_cast<int>(state.range(1));
  Var<float> x(noise({4, c, size, size}, 1), true), w(noise({c, c, 3, 3}, 2), true), b(noise({1, c, 1, 1}, 3), true);
  for (auto _ : state) {
    Tape<float> tape;
    tape.backward(sum(conv2d(x, w, b, 1, 1)));
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 64})->Args({64, 16});

void BM_GridSample(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  Var<float> x(noise({4, 16, size, size}, 4)), flow(noise({4, 2, size, size}, 5));
  for (auto& v : flow.mutable_value().values()) v *= 3;
  for (auto _ : state) benchmark::DoNotOptimize(grid_sample_bilinear(x, flow).value().data());
}
BENCHMARK(BM_GridSample)->Arg(32)->Arg(64);

void BM_SeanForward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  ParamStore<float> store;
  Sean<float> sean(store, "sean", SeanConfig{32, 8, 16, 32, 3}, Initializer(1));
  Var<float> h(noise({4, 32, size, size}, 6)), sem(noise({4, 8, size, size}, 7)), style(noise({4, 16, size, size}, 8));
  for (auto _ : state) benchmark::DoNotOptimize(sean(h, sem, style).value().data());
}
BENCHMARK(BM_SeanForward)->Arg(32)->Arg(64);

void BM_ToyGeneratorStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.base_width = 16;
  cfg.style_dim = 16;
  cfg.sean_hidden = 16;
  cfg.res_blocks = 1;
  SynthConfig sc;
  sc.pairs = 4;
  const TrainData data(synth_dataset(sc), cfg);
  const Batch b = data.batch({0, 1, 2, 3});
  SpgNet<float> net(cfg);
  for (auto _ : state) {
    Tape<float> tape;
    tape.backward(mean(net(b.pose_t, b.source, std::span<const SemanticMap>(b.source_maps), b.target_onehot, b.flow,
                           Mode{true})));
    net.params().zero_grad();
  }
}
BENCHMARK(BM_ToyGeneratorStep)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace spg

BENCHMARK_MAIN();
