#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kcciol/config.hpp"
#include "kcciol/errors.hpp"
#include "kcciol/evaluation.hpp"
#include "kcciol/experiment.hpp"

using namespace kcciol;
using ad::Matrix;
using ad::Vector;

namespace {

model::ModelSpec sine_spec(ad::Index width = 16) {
  model::ModelSpec s;
  s.layer_sizes = {data::kSineInputDim, width, width, 1};
  s.split_index = 2;
  return s;
}

eval::RegressionProtocol small_regression(int runs = 6) {
  eval::RegressionProtocol p;
  p.train_per_function = 16;
  p.val_per_function = 8;
  p.inner_batch = 4;
  p.alpha = 0.01;
  p.runs = runs;
  p.seed = 21;
  return p;
}

model::ParameterStore zero_head(model::ParameterStore p) {
  Vector v = p.values();
  v.tail(p.head_size()).setZero();
  p.set_values(v);
  return p;
}

std::string csv(const eval::EvalReport& r) {
  std::ostringstream out;
  eval::write_records_csv(out, r);
  return out.str();
}

}  // namespace

TEST(Regression, DeterministicTenEntriesPerRun) {
  const auto tasks = data::sample_sine_taskset(20, 1);
  const model::ParameterStore p = model::build_model(sine_spec(), 3);
  const eval::EvalReport a = eval::evaluate_regression(p, tasks, small_regression());
  const eval::EvalReport b = eval::evaluate_regression(p, tasks, small_regression());
  EXPECT_EQ(csv(a), csv(b));
  ASSERT_EQ(a.records.size(), 60u);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].trajectory, static_cast<int>(i / 10));
    EXPECT_EQ(a.records[i].task_count, static_cast<int>(i % 10) + 1);
    EXPECT_TRUE(std::isfinite(a.records[i].metric));
  }
}

TEST(Regression, AggregatesMatchRecords) {
  const auto tasks = data::sample_sine_taskset(20, 1);
  const eval::EvalReport r = eval::evaluate_regression(model::build_model(sine_spec(), 3), tasks, small_regression());
  const auto aggs = r.aggregates();
  ASSERT_EQ(aggs.size(), 10u);
  for (const eval::Aggregate& a : aggs) {
    double sum = 0.0;
    double sq = 0.0;
    int n = 0;
    for (const auto& rec : r.records) {
      if (rec.task_count != a.task_count) continue;
      sum += rec.metric;
      sq += rec.metric * rec.metric;
      ++n;
    }
    const double mean = sum / n;
    EXPECT_EQ(a.count, n);
    EXPECT_NEAR(a.mean, mean, 1e-12);
    EXPECT_NEAR(a.std, std::sqrt(std::max(0.0, sq / n - mean * mean)), 1e-9);
  }
  EXPECT_EQ(r.at(10).task_count, 10);
  EXPECT_THROW(r.at(11), UsageError);
}

TEST(Regression, ZeroPredictorMseIsHalfSquaredAmplitude) {
  // A zero head with zero rate predicts 0, so MSE is the mean of a^2 sin^2(z + phi).
  std::vector<data::SineTask> tasks(10, data::SineTask{1.0, 0.3});
  model::ParameterStore p = zero_head(model::build_model(sine_spec(), 5));
  const data::LearningTrajectory t = data::sample_regression_trajectory(tasks, 4, 8, 400);
  const std::vector<double> mse = eval::run_regression_trajectory(p, t, 0.0, 8);
  ASSERT_EQ(mse.size(), 10u);
  EXPECT_NEAR(mse.back(), 0.5, 0.025);
}

TEST(Regression, CumulativeMseUsesSeenFunctionsOnly) {
  // With zero rate the head never moves; entry t is the mean over the first t functions.
  const auto tasks = data::sample_sine_taskset(10, 9);
  const model::ParameterStore p = zero_head(model::build_model(sine_spec(), 5));
  const data::LearningTrajectory t = data::sample_regression_trajectory(tasks, 4, 4, 6);
  const std::vector<double> mse = eval::run_regression_trajectory(p, t, 0.0, 2);
  double acc = 0.0;
  int n = 0;
  for (int slot = 0; slot < 10; ++slot) {
    for (ad::Index r = 0; r < t.val.size(); ++r) {
      if (t.val.label[static_cast<std::size_t>(r)] != t.train.label[static_cast<std::size_t>(slot * 4)]) continue;
      acc += t.val.target(r, 0) * t.val.target(r, 0);
      ++n;
    }
    EXPECT_NEAR(mse[static_cast<std::size_t>(slot)], acc / n, 1e-12) << slot;
  }
}

TEST(Regression, ThreadCountDoesNotChangeResults) {
  const auto tasks = data::sample_sine_taskset(20, 1);
  const model::ParameterStore p = model::build_model(sine_spec(), 3);
  eval::RegressionProtocol one = small_regression(7);
  eval::RegressionProtocol four = one;
  four.threads = 4;
  EXPECT_EQ(csv(eval::evaluate_regression(p, tasks, one)), csv(eval::evaluate_regression(p, tasks, four)));
}

TEST(Regression, ThetaIsFrozen) {
  const auto tasks = data::sample_sine_taskset(20, 1);
  const model::ParameterStore p = model::build_model(sine_spec(), 3);
  const Vector before = p.values();
  eval::evaluate_regression(p, tasks, small_regression(2));
  EXPECT_EQ(p.values(), before);
  // Adapting only the head leaves the representation unchanged: the run on a
  // store whose head is swapped gives the same features.
  const model::ParameterStore q = model::replace_head(p, 1, 99);
  EXPECT_EQ(q.theta(), p.theta());
}

TEST(Classification, ZeroHeadScoresFractionOfLabelZero) {
  const data::ClassificationDataset d = data::gen_synthetic_classes(6, 4, 10, 0.1, 2);
  model::ModelSpec s;
  s.layer_sizes = {4, 8, 3};
  s.split_index = 1;
  s.head = model::HeadKind::Classification;
  const model::ParameterStore p = zero_head(model::build_model(s, 1));
  const data::LearningTrajectory t = data::sample_classification_trajectory(d, {data::TrajectoryMode::Eval, 3, 0, 4, 5}, 7);
  int zeros = 0;
  for (int l : t.val.label) zeros += l == 0 ? 1 : 0;
  EXPECT_DOUBLE_EQ(eval::run_classification_trajectory(p, t, 0.0), static_cast<double>(zeros) / t.val.size());
}

TEST(Classification, TrainedBeatsScratch) {
  const config::ExperimentConfig c = config::parse_config_file(std::string(KCCIOL_TEST_DATA_DIR) + "/tiny_class.cfg");
  config::ExperimentConfig cc = c;
  cc.phases[0].steps = 300;
  cc.phases[0].beta = 3e-3;
  cc.phases[0].alpha = 0.03;
  cc.eval.alpha = 0.03;
  cc.classification.classes = 20;
  cc.classification.dim = 16;
  cc.classification.per_class = 20;
  cc.classification.per_class_train = 5;
  cc.classification.per_class_val = 5;
  cc.classification.sigma = 0.01;
  cc.hidden = {32};
  const experiment::Pools pools = experiment::make_pools(cc);
  const meta::TrainConfig tc = cc.train_config();
  const meta::PhaseResult trained = meta::kcciol(experiment::training_source(cc, pools), nullptr,
                                                 meta::initial_params(tc), meta::effective_phase(tc, 1),
                                                 meta::phase_seed(cc.seed, 1));
  experiment::EvalOptions o = experiment::default_eval_options(cc);
  o.trajectories = 50;
  const double ours = experiment::evaluate(cc, pools, trained.params, o).at(cc.classification.eval_classes).mean;
  const model::ParameterStore scratch = eval::baseline_params(eval::BaselineKind::Scratch, tc.spec, nullptr, 12);
  const double base = experiment::evaluate(cc, pools, scratch, o).at(cc.classification.eval_classes).mean;
  EXPECT_GT(ours, base);
}

TEST(Baselines, NamesAndCheckpointRequirement) {
  for (auto k : {eval::BaselineKind::Scratch, eval::BaselineKind::Pretrained, eval::BaselineKind::Kcciol}) {
    EXPECT_EQ(eval::baseline_from_name(eval::baseline_name(k)), k);
  }
  EXPECT_EQ(eval::baseline_from_name("kcciol-representation"), eval::BaselineKind::Kcciol);
  EXPECT_THROW(eval::baseline_from_name("oracle"), UsageError);
  EXPECT_THROW(eval::baseline_params(eval::BaselineKind::Pretrained, sine_spec(), nullptr, 1), UsageError);
  const model::ParameterStore a = eval::baseline_params(eval::BaselineKind::Scratch, sine_spec(), nullptr, 4);
  const model::ParameterStore b = eval::baseline_params(eval::BaselineKind::Scratch, sine_spec(), nullptr, 4);
  EXPECT_EQ(a.values(), b.values());
}

TEST(Reports, CsvAndJsonLayout) {
  eval::EvalReport r;
  r.protocol.config_hash = "00ff";
  r.protocol.experiment = "sine-regression";
  r.protocol.source = "scratch";
  r.protocol.metric = "mse";
  r.records = {{0, 1, 0.5, 7}, {1, 1, 1.5, 8}};
  EXPECT_EQ(csv(r),
            "# config_hash=00ff experiment=sine-regression source=scratch metric=mse\n"
            "trajectory_id,task_count,metric,seed\n0,1,0.5,7\n1,1,1.5,8\n");
  std::ostringstream js;
  eval::write_summary_json(js, r);
  const nlohmann::json j = nlohmann::json::parse(js.str());
  EXPECT_EQ(j["config_hash"], "00ff");
  EXPECT_EQ(j["aggregates"][0]["mean"], 1.0);
  EXPECT_EQ(j["aggregates"][0]["std"], 0.5);
  EXPECT_EQ(j["aggregates"][0]["n"], 2);
}

TEST(Sweep, ZeroDeltaMatchesUnconstrainedPhase) {
  const config::ExperimentConfig c = config::parse_config_file(std::string(KCCIOL_TEST_DATA_DIR) + "/tiny_sine.cfg");
  const experiment::Pools pools = experiment::make_pools(c);
  const meta::TrainConfig tc = c.train_config();
  const auto source = experiment::training_source(c, pools);
  const model::ParameterStore p2 = meta::initial_params(tc);
  std::vector<double> deltas{0.0, 0.5};
  std::vector<std::uint64_t> seeds{1, 2};
  std::vector<std::pair<double, std::uint64_t>> calls;
  const auto rows = eval::mask_sweep(tc, p2, source, deltas, seeds, [&](const model::ParameterStore& p, std::uint64_t s) {
    calls.emplace_back(p.values().sum(), s);
    return p.values().squaredNorm();
  });
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].per_seed.size(), 2u);
  meta::PhaseConfig plain = meta::effective_phase(tc, 3);
  plain.lambda = 0.0;
  const meta::PhaseResult ref = meta::kcciol(source, nullptr, p2, plain, meta::phase_seed(1, 3));
  EXPECT_EQ(rows[0].per_seed[0], ref.params.values().squaredNorm());
  EXPECT_EQ(calls[0].second, 1u);
  EXPECT_EQ(calls[2].second, 1u);
  EXPECT_THROW(eval::mask_sweep(tc, p2, source, std::vector<double>{1.5}, seeds, {}), UsageError);

  std::ostringstream out;
  eval::write_sweep_csv(out, rows, "abcd");
  EXPECT_EQ(out.str().rfind("# config_hash=abcd\ndelta,mean,std,seeds\n0,", 0), 0u);
}

TEST(Threads, EnvironmentParsing) {
  ::setenv("KCCIOL_THREADS", "3", 1);
  EXPECT_EQ(eval::threads_from_env(), 3);
  ::setenv("KCCIOL_THREADS", "zero", 1);
  EXPECT_EQ(eval::threads_from_env(), 1);
  ::unsetenv("KCCIOL_THREADS");
  EXPECT_EQ(eval::threads_from_env(), 1);
}
