// SPDX-License-Identifier: Apache-2.0
//
// Learning-trajectory samplers. A trajectory is a meta-train sequence whose
// classes (or sine functions) arrive contiguously, plus a meta-validation set.
// Every sampler is a pure function of its arguments and seed.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace kcciol::data {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kAmplitudeMin = 0.1;
inline constexpr double kAmplitudeMax = 5.0;
inline constexpr double kPhaseMax = std::numbers::pi;
inline constexpr double kInputMin = -5.0;
inline constexpr double kInputMax = 5.0;
inline constexpr int kFunctionsPerTrajectory = 10;
/// z followed by a one-hot slot index.
inline constexpr int kSineInputDim = 1 + kFunctionsPerTrajectory;

struct SineTask {
  double amplitude = 1.0;
  double phase = 0.0;

  double operator()(double z) const;
};

std::vector<SineTask> sample_sine_taskset(std::size_t count, std::uint64_t seed);

struct SampleSet {
  Matrix x;                           // one sample per row
  Matrix target;                      // regression targets (rows x 1); empty for classification
  std::vector<int> label;             // trajectory-local class, or function slot for regression
  std::vector<std::int64_t> source;   // identity of the underlying sample

  Index size() const { return x.rows(); }
};

struct LearningTrajectory {
  SampleSet train;
  SampleSet val;
  /// Global class ids (or task indices) in the order they appear in train.
  std::vector<int> class_order;
  /// For regression, the task behind each slot, to recompute targets.
  std::vector<SineTask> tasks;
};

/// Picks kFunctionsPerTrajectory distinct tasks in random order. Slot n gets
/// train_per_function then val_per_function samples, z uniform in [-5, 5].
LearningTrajectory sample_regression_trajectory(std::span<const SineTask> taskset, std::uint64_t seed,
                                                int train_per_function = 1280,
                                                int val_per_function = 32);

struct ClassificationDataset {
  Matrix means;        // classes x dim
  double sigma = 0.0;
  int per_class = 0;
  Matrix x;            // row c * per_class + i is sample i of class c

  int classes() const { return static_cast<int>(means.rows()); }
  Index dim() const { return means.cols(); }
};

ClassificationDataset gen_synthetic_classes(int classes, int dim, int per_class, double sigma,
                                            std::uint64_t seed);

enum class TrajectoryMode { Train, Eval };

struct ClassTrajectoryOptions {
  TrajectoryMode mode = TrajectoryMode::Eval;
  int train_classes = 1;
  int extra_val_classes = 0;  // forced to 0 in Eval mode
  int per_class_train = 1;
  int per_class_val = 1;
};

/// Labels are remapped to 0.. in order of first appearance (train classes in
/// train order, then the extra validation classes).
LearningTrajectory sample_classification_trajectory(const ClassificationDataset& dataset,
                                                    const ClassTrajectoryOptions& options,
                                                    std::uint64_t seed);

/// Distinct labels across train and val.
int class_count(const LearningTrajectory& trajectory);

/// Builds a rows x classes one-hot target for labels[begin, begin + rows).
Matrix one_hot(std::span<const int> labels, Index begin, Index rows, int classes);

/// Text export: "# k=.. s=.. class_order=a;b;c" then one sample per line
/// (features, then the label or regression target), train rows first.
void export_trajectory(std::ostream& out, const LearningTrajectory& trajectory);

}  // namespace kcciol::data
