// SPDX-License-Identifier: Apache-2.0

#include "kcciol/experiment.hpp"

#include "kcciol/rng.hpp"

namespace kcciol::experiment {

using config::ExperimentKind;

Pools make_pools(const config::ExperimentConfig& config) {
  Pools pools;
  const std::uint64_t train_seed = derive_seed(config.seed, kTrainPoolStream);
  const std::uint64_t test_seed = derive_seed(config.seed, kTestPoolStream);
  if (config.kind == ExperimentKind::SineRegression) {
    pools.train_tasks = data::sample_sine_taskset(static_cast<std::size_t>(config.sine.train_functions), train_seed);
    pools.test_tasks = data::sample_sine_taskset(static_cast<std::size_t>(config.sine.test_functions), test_seed);
  } else {
    const config::ClassData& c = config.classification;
    pools.train_classes = data::gen_synthetic_classes(c.classes, c.dim, c.per_class, c.sigma, train_seed);
    pools.test_classes = data::gen_synthetic_classes(c.classes, c.dim, c.per_class, c.sigma, test_seed);
  }
  return pools;
}

meta::TrajectorySource training_source(const config::ExperimentConfig& config, const Pools& pools) {
  if (config.kind == ExperimentKind::SineRegression) {
    return [&config, &pools](std::uint64_t seed) {
      return data::sample_regression_trajectory(pools.train_tasks, seed, config.sine.train_per_function,
                                                config.sine.val_per_function);
    };
  }
  return [&config, &pools](std::uint64_t seed) {
    const config::ClassData& c = config.classification;
    data::ClassTrajectoryOptions options;
    options.mode = data::TrajectoryMode::Train;
    options.train_classes = c.train_classes;
    options.extra_val_classes = c.extra_val_classes;
    options.per_class_train = c.per_class_train;
    options.per_class_val = c.per_class_val;
    return data::sample_classification_trajectory(*pools.train_classes, options, seed);
  };
}

EvalOptions default_eval_options(const config::ExperimentConfig& config) {
  EvalOptions o;
  o.seed = derive_seed(config.seed, kEvalStream);
  o.trajectories = config.eval.trajectories;
  o.threads = eval::threads_from_env();
  return o;
}

eval::EvalReport evaluate(const config::ExperimentConfig& config, const Pools& pools,
                          const model::ParameterStore& trained, const EvalOptions& options) {
  eval::EvalReport report;
  if (config.kind == ExperimentKind::SineRegression) {
    eval::RegressionProtocol p;
    p.alpha = config.eval.alpha;
    p.inner_batch = config.eval.inner_batch;
    p.train_per_function = config.sine.train_per_function;
    p.val_per_function = config.sine.val_per_function;
    p.runs = options.trajectories;
    p.seed = options.seed;
    p.threads = options.threads;
    report = eval::evaluate_regression(trained, pools.test_tasks, p);
  } else {
    const config::ClassData& c = config.classification;
    eval::ClassificationProtocol p;
    p.alpha = config.eval.alpha;
    p.classes = c.eval_classes;
    p.per_class_train = c.per_class_train;
    p.per_class_val = c.per_class_val;
    p.trajectories = options.trajectories;
    p.seed = options.seed;
    p.threads = options.threads;
    report = eval::evaluate_classification(trained, *pools.test_classes, p);
  }
  report.protocol.config_hash = config::config_hash(config);
  return report;
}

}  // namespace kcciol::experiment
