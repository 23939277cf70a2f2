// SPDX-License-Identifier: Apache-2.0

#include "kcciol/trajectories.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <string>

#include "kcciol/errors.hpp"
#include "kcciol/rng.hpp"

namespace kcciol::data {

double SineTask::operator()(double z) const { return amplitude * std::sin(z + phase); }

std::vector<SineTask> sample_sine_taskset(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw UsageError("sine task set must hold at least one task");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> amp(kAmplitudeMin, kAmplitudeMax);
  std::uniform_real_distribution<double> phase(0.0, kPhaseMax);
  std::vector<SineTask> tasks(count);
  for (SineTask& t : tasks) {
    t.amplitude = amp(rng);
    t.phase = phase(rng);
  }
  return tasks;
}

namespace {

// First `take` entries of a uniformly random permutation of [0, n).
std::vector<int> draw_without_replacement(int n, int take, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < take; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(take));
  return idx;
}

void fill_sine_rows(SampleSet& set, Index row0, int count, int slot, const SineTask& task,
                    std::int64_t source0, Rng& rng) {
  std::uniform_real_distribution<double> zdist(kInputMin, kInputMax);
  for (int i = 0; i < count; ++i) {
    const Index r = row0 + i;
    const double z = zdist(rng);
    set.x(r, 0) = z;
    set.x(r, 1 + slot) = 1.0;
    set.target(r, 0) = task(z);
    set.label[static_cast<std::size_t>(r)] = slot;
    set.source[static_cast<std::size_t>(r)] = source0 + r;
  }
}

SampleSet sized_set(Index rows, Index cols, bool regression) {
  SampleSet s;
  s.x = Matrix::Zero(rows, cols);
  if (regression) s.target = Matrix::Zero(rows, 1);
  s.label.assign(static_cast<std::size_t>(rows), 0);
  s.source.assign(static_cast<std::size_t>(rows), 0);
  return s;
}

}  // namespace

LearningTrajectory sample_regression_trajectory(std::span<const SineTask> taskset, std::uint64_t seed,
                                                int train_per_function, int val_per_function) {
  if (taskset.size() < static_cast<std::size_t>(kFunctionsPerTrajectory)) {
    throw UsageError("task set holds " + std::to_string(taskset.size()) + " tasks, need at least " +
                     std::to_string(kFunctionsPerTrajectory));
  }
  if (train_per_function < 0 || val_per_function < 1) {
    throw UsageError("regression trajectory needs >= 0 train and >= 1 validation samples per function");
  }
  Rng rng = make_rng(seed);
  LearningTrajectory t;
  t.class_order =
      draw_without_replacement(static_cast<int>(taskset.size()), kFunctionsPerTrajectory, rng);
  const Index k = static_cast<Index>(train_per_function) * kFunctionsPerTrajectory;
  const Index s = static_cast<Index>(val_per_function) * kFunctionsPerTrajectory;
  t.train = sized_set(k, kSineInputDim, true);
  t.val = sized_set(s, kSineInputDim, true);
  for (int slot = 0; slot < kFunctionsPerTrajectory; ++slot) {
    const SineTask& task = taskset[static_cast<std::size_t>(t.class_order[static_cast<std::size_t>(slot)])];
    t.tasks.push_back(task);
    fill_sine_rows(t.train, static_cast<Index>(slot) * train_per_function, train_per_function, slot,
                   task, 0, rng);
    fill_sine_rows(t.val, static_cast<Index>(slot) * val_per_function, val_per_function, slot, task,
                   k, rng);
  }
  return t;
}

ClassificationDataset gen_synthetic_classes(int classes, int dim, int per_class, double sigma,
                                            std::uint64_t seed) {
  if (classes < 2 || dim < 1 || per_class < 1) {
    throw UsageError("synthetic classes need >= 2 classes, dim >= 1, >= 1 sample per class");
  }
  if (sigma < 0.0) throw UsageError("synthetic class spread must be non-negative");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> mean_dist(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  ClassificationDataset ds;
  ds.sigma = sigma;
  ds.per_class = per_class;
  ds.means.resize(classes, dim);
  for (Index c = 0; c < classes; ++c) {
    for (Index j = 0; j < dim; ++j) ds.means(c, j) = mean_dist(rng);
  }
  ds.x.resize(static_cast<Index>(classes) * per_class, dim);
  for (Index c = 0; c < classes; ++c) {
    for (Index i = 0; i < per_class; ++i) {
      for (Index j = 0; j < dim; ++j) {
        ds.x(c * per_class + i, j) = ds.means(c, j) + sigma * noise(rng);
      }
    }
  }
  return ds;
}

LearningTrajectory sample_classification_trajectory(const ClassificationDataset& dataset,
                                                    const ClassTrajectoryOptions& options,
                                                    std::uint64_t seed) {
  ClassTrajectoryOptions o = options;
  if (o.mode == TrajectoryMode::Eval) o.extra_val_classes = 0;
  if (o.mode == TrajectoryMode::Train && o.extra_val_classes < 1) {
    throw UsageError("train-mode trajectories need at least one extra validation class");
  }
  if (o.train_classes < 1 || o.per_class_val < 1 || o.per_class_train < 0) {
    throw UsageError("trajectory needs >= 1 train class and >= 1 validation sample per class");
  }
  const int total = o.train_classes + o.extra_val_classes;
  if (total > dataset.classes()) {
    throw UsageError("trajectory needs " + std::to_string(total) + " classes, dataset has " +
                     std::to_string(dataset.classes()));
  }
  if (o.per_class_train + o.per_class_val > dataset.per_class) {
    throw UsageError("trajectory needs " + std::to_string(o.per_class_train + o.per_class_val) +
                     " samples per class, dataset has " + std::to_string(dataset.per_class));
  }

  Rng rng = make_rng(seed);
  const std::vector<int> chosen = draw_without_replacement(dataset.classes(), total, rng);
  LearningTrajectory t;
  t.class_order.assign(chosen.begin(), chosen.begin() + o.train_classes);

  const Index k = static_cast<Index>(o.train_classes) * o.per_class_train;
  const Index s = static_cast<Index>(total) * o.per_class_val;
  t.train = sized_set(k, dataset.dim(), false);
  t.val = sized_set(s, dataset.dim(), false);
  Index tr_row = 0;
  Index val_row = 0;
  auto copy_row = [&](SampleSet& set, Index row, int cls, int local, int sample) {
    const Index src = static_cast<Index>(cls) * dataset.per_class + sample;
    set.x.row(row) = dataset.x.row(src);
    set.label[static_cast<std::size_t>(row)] = local;
    set.source[static_cast<std::size_t>(row)] = src;
  };
  for (int local = 0; local < total; ++local) {
    const int cls = chosen[static_cast<std::size_t>(local)];
    const bool in_train = local < o.train_classes;
    const int needed = (in_train ? o.per_class_train : 0) + o.per_class_val;
    const std::vector<int> samples = draw_without_replacement(dataset.per_class, needed, rng);
    int next = 0;
    if (in_train) {
      for (int i = 0; i < o.per_class_train; ++i) copy_row(t.train, tr_row++, cls, local, samples[static_cast<std::size_t>(next++)]);
    }
    for (int i = 0; i < o.per_class_val; ++i) copy_row(t.val, val_row++, cls, local, samples[static_cast<std::size_t>(next++)]);
  }
  return t;
}

int class_count(const LearningTrajectory& trajectory) {
  std::set<int> labels(trajectory.train.label.begin(), trajectory.train.label.end());
  labels.insert(trajectory.val.label.begin(), trajectory.val.label.end());
  return static_cast<int>(labels.size());
}

Matrix one_hot(std::span<const int> labels, Index begin, Index rows, int classes) {
  if (begin < 0 || begin + rows > static_cast<Index>(labels.size())) {
    throw UsageError("one_hot: label range out of bounds");
  }
  Matrix m = Matrix::Zero(rows, classes);
  for (Index r = 0; r < rows; ++r) {
    const int c = labels[static_cast<std::size_t>(begin + r)];
    if (c < 0 || c >= classes) throw UsageError("one_hot: label outside head dimension");
    m(r, c) = 1.0;
  }
  return m;
}

void export_trajectory(std::ostream& out, const LearningTrajectory& trajectory) {
  out << "# k=" << trajectory.train.size() << " s=" << trajectory.val.size() << " class_order=";
  for (std::size_t i = 0; i < trajectory.class_order.size(); ++i) {
    out << (i ? ";" : "") << trajectory.class_order[i];
  }
  out << "\n";
  const auto old_precision = out.precision(17);
  for (const SampleSet* set : {&trajectory.train, &trajectory.val}) {
    for (Index r = 0; r < set->size(); ++r) {
      for (Index c = 0; c < set->x.cols(); ++c) out << set->x(r, c) << ",";
      if (set->target.size() > 0) {
        out << set->target(r, 0) << "\n";
      } else {
        out << set->label[static_cast<std::size_t>(r)] << "\n";
      }
    }
  }
  out.precision(old_precision);
}

}  // namespace kcciol::data
