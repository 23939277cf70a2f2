// SPDX-License-Identifier: Apache-2.0

#include "kcciol/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "kcciol/errors.hpp"
#include "kcciol/rng.hpp"

namespace kcciol::eval {

using ad::Index;
using ad::Matrix;
using ad::Vector;

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(std::span<const double> xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return r;
}

// Runs job(i) for i in [0, n) on up to `threads` workers; results land by index.
template <class Result, class Job>
std::vector<Result> run_indexed(int n, int threads, const Job& job) {
  std::vector<Result> out(static_cast<std::size_t>(n));
  const int workers = std::clamp(threads, 1, std::max(n, 1));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = job(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) out[static_cast<std::size_t>(i)] = job(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// One SGD step on the flat head vector for rows [begin, begin + rows).
void head_sgd_step(const model::ModelSpec& spec, Vector& head_values, const Matrix& features,
                   const data::SampleSet& set, Index begin, Index rows, double alpha) {
  ad::Tape tape;
  const std::vector<ad::Var> w = model::bind_head(tape, spec, head_values);
  const ad::Var f = tape.constant(Matrix(features.middleRows(begin, rows)));
  const ad::Var loss = meta::batch_loss(spec, model::head(spec, w, f), set, begin, rows);
  const std::vector<Matrix> g = ad::grad_values(loss, w);
  head_values -= alpha * model::flatten(g);
}

}  // namespace

std::vector<Aggregate> EvalReport::aggregates() const {
  std::map<int, std::vector<double>> by_count;
  for (const MetricsRecord& r : records) by_count[r.task_count].push_back(r.metric);
  std::vector<Aggregate> out;
  for (const auto& [count, values] : by_count) {
    const MeanStd ms = mean_std(values);
    out.push_back({count, ms.mean, ms.std, static_cast<int>(values.size())});
  }
  return out;
}

Aggregate EvalReport::at(int task_count) const {
  for (const Aggregate& a : aggregates()) {
    if (a.task_count == task_count) return a;
  }
  throw UsageError("report has no records for task count " + std::to_string(task_count));
}

void write_records_csv(std::ostream& out, const EvalReport& report) {
  out << "# config_hash=" << report.protocol.config_hash << " experiment=" << report.protocol.experiment
      << " source=" << report.protocol.source << " metric=" << report.protocol.metric << "\n";
  out << "trajectory_id,task_count,metric,seed\n";
  const auto old = out.precision(17);
  for (const MetricsRecord& r : report.records) {
    out << r.trajectory << "," << r.task_count << "," << r.metric << "," << r.seed << "\n";
  }
  out.precision(old);
}

void write_summary_json(std::ostream& out, const EvalReport& report) {
  nlohmann::ordered_json j;
  const ProtocolInfo& p = report.protocol;
  j["config_hash"] = p.config_hash;
  j["protocol"] = {{"experiment", p.experiment}, {"source", p.source},           {"metric", p.metric},
                   {"alpha", p.alpha},           {"inner_batch", p.inner_batch}, {"samples_per_class", p.samples_per_class},
                   {"trajectories", p.trajectories}, {"seed", p.seed}};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const Aggregate& a : report.aggregates()) {
    rows.push_back({{"task_count", a.task_count}, {"mean", a.mean}, {"std", a.std}, {"n", a.count}});
  }
  j["aggregates"] = std::move(rows);
  out << j.dump(2) << "\n";
}

// --- single trajectory -----------------------------------------------------

std::vector<double> run_regression_trajectory(const ParameterStore& params,
                                              const data::LearningTrajectory& trajectory, double alpha,
                                              int inner_batch) {
  const model::ModelSpec& spec = params.spec();
  if (spec.head != model::HeadKind::Regression) throw UsageError("regression protocol needs a regression head");
  if (inner_batch < 1) throw UsageError("inner batch must be >= 1");
  const data::SampleSet& train = trajectory.train;
  const data::SampleSet& val = trajectory.val;
  const Matrix train_features = model::represent(params, train.x);
  const Matrix val_features = model::represent(params, val.x);
  Vector w = params.head();

  std::vector<double> cumulative;
  std::set<int> seen;
  Index begin = 0;
  while (begin < train.size()) {
    const int slot = train.label[static_cast<std::size_t>(begin)];
    Index end = begin;
    while (end < train.size() && train.label[static_cast<std::size_t>(end)] == slot) ++end;
    // Batches stay inside one function's run of samples.
    for (Index b = begin; b < end; b += inner_batch) {
      head_sgd_step(spec, w, train_features, train, b, std::min<Index>(inner_batch, end - b), alpha);
    }
    seen.insert(slot);

    std::vector<Index> rows;
    for (Index r = 0; r < val.size(); ++r) {
      if (seen.count(val.label[static_cast<std::size_t>(r)])) rows.push_back(r);
    }
    if (rows.empty()) throw UsageError("validation set has no samples for a trained function");
    Matrix f(static_cast<Index>(rows.size()), val_features.cols());
    Matrix y(static_cast<Index>(rows.size()), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      f.row(static_cast<Index>(i)) = val_features.row(rows[i]);
      y(static_cast<Index>(i), 0) = val.target(rows[i], 0);
    }
    const Matrix prediction = model::head_forward(spec, w, f);
    const double mse = (prediction - y).squaredNorm() / static_cast<double>(rows.size());
    ad::require_finite(Matrix::Constant(1, 1, mse), "evaluation MSE");
    cumulative.push_back(mse);
    begin = end;
  }
  return cumulative;
}

double run_classification_trajectory(const ParameterStore& params, const data::LearningTrajectory& trajectory,
                                     double alpha) {
  const model::ModelSpec& spec = params.spec();
  if (spec.head != model::HeadKind::Classification) {
    throw UsageError("classification protocol needs a logits head");
  }
  const data::SampleSet& train = trajectory.train;
  const data::SampleSet& val = trajectory.val;
  if (val.size() == 0) throw UsageError("classification protocol needs validation samples");
  const Matrix train_features = model::represent(params, train.x);
  Vector w = params.head();
  for (Index r = 0; r < train.size(); ++r) head_sgd_step(spec, w, train_features, train, r, 1, alpha);

  const Matrix logits = model::head_forward(spec, w, model::represent(params, val.x));
  ad::require_finite(logits, "evaluation logits");
  int correct = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    if (best == val.label[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(val.size());
}

// --- protocols -------------------------------------------------------------

EvalReport evaluate_regression(const ParameterStore& trained, std::span<const data::SineTask> taskset,
                               const RegressionProtocol& protocol) {
  if (protocol.runs < 1) throw UsageError("evaluation needs at least one run");
  auto job = [&](int r) {
    const std::uint64_t run_seed = derive_seed(protocol.seed, static_cast<std::uint64_t>(r));
    const data::LearningTrajectory t = data::sample_regression_trajectory(
        taskset, derive_seed(run_seed, 1), protocol.train_per_function, protocol.val_per_function);
    const ParameterStore fresh = model::replace_head(trained, 1, derive_seed(run_seed, 2));
    const std::vector<double> mse = run_regression_trajectory(fresh, t, protocol.alpha, protocol.inner_batch);
    std::vector<MetricsRecord> records;
    for (std::size_t i = 0; i < mse.size(); ++i) {
      records.push_back({r, static_cast<int>(i) + 1, mse[i], run_seed});
    }
    return records;
  };
  EvalReport report;
  for (auto& rs : run_indexed<std::vector<MetricsRecord>>(protocol.runs, protocol.threads, job)) {
    report.records.insert(report.records.end(), rs.begin(), rs.end());
  }
  report.protocol.experiment = "sine-regression";
  report.protocol.metric = "mse";
  report.protocol.alpha = protocol.alpha;
  report.protocol.inner_batch = protocol.inner_batch;
  report.protocol.samples_per_class = protocol.train_per_function;
  report.protocol.trajectories = protocol.runs;
  report.protocol.seed = protocol.seed;
  return report;
}

EvalReport evaluate_classification(const ParameterStore& trained, const data::ClassificationDataset& dataset,
                                   const ClassificationProtocol& protocol) {
  if (protocol.trajectories < 1) throw UsageError("evaluation needs at least one trajectory");
  data::ClassTrajectoryOptions options;
  options.mode = data::TrajectoryMode::Eval;
  options.train_classes = protocol.classes;
  options.per_class_train = protocol.per_class_train;
  options.per_class_val = protocol.per_class_val;
  auto job = [&](int i) {
    const std::uint64_t run_seed = derive_seed(protocol.seed, static_cast<std::uint64_t>(i));
    const data::LearningTrajectory t = data::sample_classification_trajectory(dataset, options, derive_seed(run_seed, 1));
    const ParameterStore fresh = model::replace_head(trained, protocol.classes, derive_seed(run_seed, 2));
    return MetricsRecord{i, protocol.classes, run_classification_trajectory(fresh, t, protocol.alpha), run_seed};
  };
  EvalReport report;
  report.records = run_indexed<MetricsRecord>(protocol.trajectories, protocol.threads, job);
  report.protocol.experiment = "synthetic-classification";
  report.protocol.metric = "accuracy";
  report.protocol.alpha = protocol.alpha;
  report.protocol.inner_batch = 1;
  report.protocol.samples_per_class = protocol.per_class_train;
  report.protocol.trajectories = protocol.trajectories;
  report.protocol.seed = protocol.seed;
  return report;
}

const char* baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Scratch: return "scratch";
    case BaselineKind::Pretrained: return "pretrained";
    case BaselineKind::Kcciol: return "kcciol";
  }
  return "?";
}

BaselineKind baseline_from_name(const std::string& name) {
  if (name == "scratch") return BaselineKind::Scratch;
  if (name == "pretrained") return BaselineKind::Pretrained;
  if (name == "kcciol" || name == "kcciol-representation") return BaselineKind::Kcciol;
  throw UsageError("unknown baseline '" + name + "' (expected scratch, pretrained or kcciol)");
}

ParameterStore baseline_params(BaselineKind kind, const model::ModelSpec& spec, const ParameterStore* checkpoint,
                               std::uint64_t seed) {
  if (kind == BaselineKind::Scratch) return model::build_model(spec, seed);
  if (checkpoint == nullptr) {
    throw UsageError(std::string("baseline '") + baseline_name(kind) + "' requires a checkpoint");
  }
  return *checkpoint;
}

int threads_from_env() {
  const char* v = std::getenv("KCCIOL_THREADS");
  if (v == nullptr) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) return 1;
  return static_cast<int>(std::min<long>(n, 256));
}

// --- masking-level sweep ---------------------------------------------------

std::vector<SweepRow> mask_sweep(const meta::TrainConfig& config, const ParameterStore& phase2,
                                 const meta::TrajectorySource& source, std::span<const double> deltas,
                                 std::span<const std::uint64_t> seeds, const Scorer& score) {
  for (double d : deltas) {
    if (!(d >= 0.0 && d <= 1.0)) throw UsageError("sweep deltas must lie in [0, 1]");
  }
  if (seeds.empty()) throw UsageError("sweep needs at least one seed");
  std::vector<SweepRow> rows;
  for (double d : deltas) {
    SweepRow row;
    row.delta = d;
    for (std::uint64_t s : seeds) {
      const meta::PhaseResult p3 = meta::constrained_phase(config, phase2, d, source, meta::phase_seed(s, 3));
      row.per_seed.push_back(score(p3.params, s));
    }
    const MeanStd ms = mean_std(row.per_seed);
    row.mean = ms.mean;
    row.std = ms.std;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows, const std::string& config_hash) {
  out << "# config_hash=" << config_hash << "\n";
  out << "delta,mean,std,seeds\n";
  const auto old = out.precision(17);
  for (const SweepRow& r : rows) out << r.delta << "," << r.mean << "," << r.std << "," << r.per_seed.size() << "\n";
  out.precision(old);
}

}  // namespace kcciol::eval
