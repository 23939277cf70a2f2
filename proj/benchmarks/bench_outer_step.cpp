// Outer-step cost at the shipped scales.

#include <benchmark/benchmark.h>

#include "kcciol/metalearner.hpp"
#include "kcciol/model.hpp"
#include "kcciol/trajectories.hpp"

namespace {

using namespace kcciol;

model::ModelSpec sine_spec(ad::Index width) {
  model::ModelSpec s;
  s.layer_sizes = {data::kSineInputDim};
  for (int i = 0; i < 8; ++i) s.layer_sizes.push_back(width);
  s.layer_sizes.push_back(1);
  s.split_index = 6;
  return s;
}

// args: width, samples per function, constraint (0 off, 1 full, 2 first-order)
void BM_OuterStep(benchmark::State& state) {
  const model::ModelSpec spec = sine_spec(state.range(0));
  const auto tasks = data::sample_sine_taskset(400, 1);
  const auto traj = data::sample_regression_trajectory(tasks, 2, static_cast<int>(state.range(1)), 32);
  const model::ParameterStore params = model::build_model(spec, 3);
  meta::PhaseConfig phase{3e-3, 1e-4, state.range(2) ? 5e-4 : 0.0, 0.0, 1, 32};
  const Mask mask = meta::get_mask(params.values(), 0.5);
  auto adam = optim::AdamState::zeros(params.size());
  const meta::StepOptions options{state.range(2) == 2};
  for (auto _ : state) {
    auto r = meta::outer_step(params, adam, traj, state.range(2) ? &mask : nullptr, phase, options);
    benchmark::DoNotOptimize(r.losses.total);
  }
}
BENCHMARK(BM_OuterStep)
    // Full second order at width 300 needs more than 5 GB and is left out.
    ->Args({300, 1280, 0})
    ->Args({300, 1280, 2})
    ->Args({100, 1280, 0})
    ->Args({100, 1280, 1})
    ->Args({100, 1280, 2})
    ->Args({32, 1280, 0})
    ->Args({32, 1280, 1})
    ->Args({32, 1280, 2})
    ->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const model::ModelSpec spec = sine_spec(state.range(0));
  const model::ParameterStore params = model::build_model(spec, 3);
  const ad::Matrix x = ad::Matrix::Random(12800, data::kSineInputDim);
  for (auto _ : state) benchmark::DoNotOptimize(model::forward(params, x).sum());
}
BENCHMARK(BM_Forward)->Arg(300)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
