// SPDX-License-Identifier: Apache-2.0
//
// Online evaluation protocol. Per trajectory: theta is frozen, the head is
// re-initialized, every meta-train sample is consumed exactly once in order
// with plain SGD on the head, then the adapted model is scored on the
// validation samples.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kcciol/metalearner.hpp"
#include "kcciol/model.hpp"
#include "kcciol/trajectories.hpp"

namespace kcciol::eval {

using model::ParameterStore;

struct MetricsRecord {
  int trajectory = 0;
  int task_count = 0;  // classes (classification) or functions seen so far (regression)
  double metric = 0.0;  // accuracy or MSE
  std::uint64_t seed = 0;
};

struct Aggregate {
  int task_count = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  int count = 0;
};

struct ProtocolInfo {
  std::string experiment;  // "sine-regression" | "synthetic-classification"
  std::string source;      // "kcciol" | "pretrained" | "scratch" | checkpoint path
  std::string metric;      // "mse" | "accuracy"
  double alpha = 0.0;
  int inner_batch = 1;
  int samples_per_class = 0;
  int trajectories = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct EvalReport {
  ProtocolInfo protocol;
  std::vector<MetricsRecord> records;

  /// Mean and std per task count, ascending.
  std::vector<Aggregate> aggregates() const;
  /// Aggregate at a task count; throws if absent.
  Aggregate at(int task_count) const;
};

void write_records_csv(std::ostream& out, const EvalReport& report);
void write_summary_json(std::ostream& out, const EvalReport& report);

// --- single trajectory -----------------------------------------------------

/// Online per-batch SGD on the head of `params` (already re-initialized).
/// Returns cumulative validation MSE after each function: entry t-1 is the
/// mean over the validation rows of the first t functions.
std::vector<double> run_regression_trajectory(const ParameterStore& params,
                                              const data::LearningTrajectory& trajectory, double alpha,
                                              int inner_batch);

/// Per-sample SGD on the head, then argmax accuracy (lowest index wins ties).
double run_classification_trajectory(const ParameterStore& params, const data::LearningTrajectory& trajectory,
                                     double alpha);

// --- protocols -------------------------------------------------------------

struct RegressionProtocol {
  double alpha = 3e-3;
  int inner_batch = 32;
  int train_per_function = 1280;
  int val_per_function = 32;
  int runs = 50;
  std::uint64_t seed = 0;
  int threads = 1;
};

EvalReport evaluate_regression(const ParameterStore& trained, std::span<const data::SineTask> taskset,
                               const RegressionProtocol& protocol);

struct ClassificationProtocol {
  double alpha = 0.1;
  int classes = 2;
  int per_class_train = 5;
  int per_class_val = 5;
  int trajectories = 50;
  std::uint64_t seed = 0;
  int threads = 1;
};

EvalReport evaluate_classification(const ParameterStore& trained, const data::ClassificationDataset& dataset,
                                   const ClassificationProtocol& protocol);

enum class BaselineKind { Scratch, Pretrained, Kcciol };

const char* baseline_name(BaselineKind kind);
BaselineKind baseline_from_name(const std::string& name);

/// Where theta comes from for a baseline: Scratch builds a fresh store from
/// `spec` and `seed`; the others require a checkpointed store.
ParameterStore baseline_params(BaselineKind kind, const model::ModelSpec& spec, const ParameterStore* checkpoint,
                               std::uint64_t seed);

/// Worker count from KCCIOL_THREADS (unset or invalid means 1).
int threads_from_env();

// --- masking-level sweep ---------------------------------------------------

struct SweepRow {
  double delta = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_seed;
};

/// Scores the constrained phase for each delta and seed. Phases 1-2 are
/// shared (`phase2`); phase 3 trajectories and the scorer use the same seed
/// for every delta, so rows are paired.
using Scorer = std::function<double(const ParameterStore& trained, std::uint64_t seed)>;

std::vector<SweepRow> mask_sweep(const meta::TrainConfig& config, const ParameterStore& phase2,
                                 const meta::TrajectorySource& source, std::span<const double> deltas,
                                 std::span<const std::uint64_t> seeds, const Scorer& score);

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, const std::string& config_hash);

}  // namespace kcciol::eval
