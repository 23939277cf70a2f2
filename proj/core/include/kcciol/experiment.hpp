// SPDX-License-Identifier: Apache-2.0
//
// Binds an ExperimentConfig to data pools, trajectory sources and the
// matching evaluation protocol.
//
// Seed streams below the master seed:
//   0..3  initial parameters and phases 1-3 (see meta::phase_seed)
//   4     evaluation runs
//   5     meta-train pool (sine functions or synthetic classes)
//   6     held-out pool

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kcciol/config.hpp"
#include "kcciol/evaluation.hpp"

namespace kcciol::experiment {

inline constexpr std::uint64_t kEvalStream = 4;
inline constexpr std::uint64_t kTrainPoolStream = 5;
inline constexpr std::uint64_t kTestPoolStream = 6;

struct Pools {
  std::vector<data::SineTask> train_tasks;
  std::vector<data::SineTask> test_tasks;
  std::optional<data::ClassificationDataset> train_classes;
  std::optional<data::ClassificationDataset> test_classes;
};

/// Pools depend only on the master seed and the data settings.
Pools make_pools(const config::ExperimentConfig& config);

/// Meta-training trajectories drawn from the train pool. Holds references
/// to `config` and `pools`.
meta::TrajectorySource training_source(const config::ExperimentConfig& config, const Pools& pools);

struct EvalOptions {
  std::uint64_t seed = 0;
  int trajectories = 50;
  int threads = 1;
};

/// Default evaluation options: stream kEvalStream of the master seed.
EvalOptions default_eval_options(const config::ExperimentConfig& config);

/// Runs the held-out protocol for the configured experiment kind.
eval::EvalReport evaluate(const config::ExperimentConfig& config, const Pools& pools,
                          const model::ParameterStore& trained, const EvalOptions& options);

}  // namespace kcciol::experiment
