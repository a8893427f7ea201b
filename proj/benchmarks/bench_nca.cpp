#include <benchmark/benchmark.h>

#include "nca/autodiff.hpp"
#include "nca/presets.hpp"
#include "nca/training.hpp"

namespace {

nca::ModelParams<float> grown_params(int perception, int hidden) {
  nca::Rng rng(1);
  auto p = nca::ModelParams<float>::initialize(perception, hidden, rng);
  std::normal_distribution<float> n(0.f, 0.05f);
  for (auto& [name, block] : p.blocks())
    for (float& v : block) v += n(rng);
  p.b2(nca::kAlphaChannel) = 0.1f;
  return p;
}

nca::CellGrid grown_state(const nca::GridConfig& grid, const nca::ModelParams<float>& params) {
  return nca::grow(params, grid, nca::Genome{}, 40, 0.5, 3);
}

void BM_Step(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto preset = nca::make_preset("plain-heart", size, size);
  const auto params = grown_params(48, 128);
  const auto grid = grown_state(preset.grid, params);
  nca::Rng rng(5);
  for (auto _ : state) {
    auto next = nca::step(grid, params, nca::StepConfig{}, rng);
    benchmark::DoNotOptimize(next.data().data());
  }
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Step)->Arg(24)->Arg(40)->Arg(64);

void BM_ForwardBackward(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  const auto preset = nca::make_preset("plain-heart", 40, 40);
  const auto params = grown_params(48, 128);
  const auto seed = nca::make_seed<float>(preset.grid, nca::Genome{}, {20, 20});
  const auto& target = preset.family.image("heart");
  for (auto _ : state) {
    nca::Rng rng(7);
    auto [final_state, tape] =
        nca::forward_recorded(seed, params, steps, {}, nca::StepConfig{}, rng);
    auto grads = nca::backward(tape, params, nca::loss(final_state, target).grad);
    benchmark::DoNotOptimize(grads.dw1.data());
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainIteration(benchmark::State& state) {
  const auto preset = nca::make_preset("plain-heart", 40, 40);
  nca::TrainConfig config = preset.train;
  config.iterations = 1;
  config.batch_size = 4;
  config.steps_min = 64;
  config.steps_max = 64;
  for (auto _ : state) {
    auto result = nca::train_growing(preset.family, preset.grid, config);
    benchmark::DoNotOptimize(result.history.data());
  }
}
BENCHMARK(BM_TrainIteration)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
