#include <gtest/gtest.h>

#include <sstream>

#include "kcciol/config.hpp"
#include "kcciol/errors.hpp"

using namespace kcciol;
using config::ExperimentConfig;

namespace {

const char* kMinimal = R"(
[experiment]
kind = sine-regression
[model]
hidden = 8,8
split = 1
[phase1]
alpha = 0.1
beta = 0.01
steps = 3
[phase2]
alpha = 0.1
beta = 0.01
steps = 3
[phase3]
alpha = 0.1
beta = 0.01
steps = 3
[consolidation]
gamma = 0.1
lambda = 0.2
delta = 0.5
)";

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return config::parse_config(in);
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto at = text.find(from);
  EXPECT_NE(at, std::string::npos) << from;
  return text.replace(at, from.size(), to);
}

void expect_config_error(const std::string& text, const std::string& fragment, int line = -1) {
  try {
    parse(text);
    ADD_FAILURE() << "expected ConfigError mentioning " << fragment;
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(fragment), std::string::npos) << what;
    if (line > 0) EXPECT_NE(what.find("line " + std::to_string(line)), std::string::npos) << what;
  }
}

}  // namespace

TEST(Config, PaperFileParsesExactly) {
  const ExperimentConfig c = config::parse_config_file(std::string(KCCIOL_SOURCE_DIR) + "/configs/sine_paper.cfg");
  EXPECT_EQ(c.kind, config::ExperimentKind::SineRegression);
  EXPECT_EQ(c.hidden, std::vector<ad::Index>(8, 300));
  EXPECT_EQ(c.split, 6);
  EXPECT_EQ(c.spec(), model::ModelSpec::sine_paper());
  EXPECT_EQ(c.phases[0].alpha, 3e-3);
  EXPECT_EQ(c.phases[0].beta, 1e-4);
  EXPECT_EQ(c.phases[0].steps, 20000);
  EXPECT_EQ(c.phases[1].beta, 2.7e-6);
  EXPECT_EQ(c.phases[1].steps, 7500);
  EXPECT_EQ(c.phases[2].steps, 23500);
  EXPECT_EQ(c.phases[2].inner_batch, 32);
  EXPECT_EQ(c.gamma, 1e-5);
  EXPECT_EQ(c.lambda, 5e-4);
  EXPECT_EQ(c.delta, 0.5);
  EXPECT_EQ(c.sine.train_functions, 400);
  EXPECT_EQ(c.sine.test_functions, 500);
  EXPECT_EQ(c.sine.train_per_function, 1280);
  EXPECT_EQ(c.sine.val_per_function, 32);
  EXPECT_EQ(c.eval.trajectories, 50);
  EXPECT_EQ(c.eval.alpha, c.phases[2].alpha);
}

TEST(Config, DefaultsAndSpec) {
  const ExperimentConfig c = parse(kMinimal);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.phases[0].inner_batch, 32);
  EXPECT_EQ(c.eval.alpha, 0.1);
  EXPECT_EQ(c.eval.inner_batch, 32);
  EXPECT_EQ(c.spec().layer_sizes, (std::vector<ad::Index>{11, 8, 8, 1}));
  const ExperimentConfig k = parse(replace(kMinimal, "sine-regression", "synthetic-classification"));
  EXPECT_EQ(k.phases[0].inner_batch, 1);
  EXPECT_EQ(k.spec().layer_sizes, (std::vector<ad::Index>{16, 8, 8, 3}));
  EXPECT_EQ(k.spec().head, model::HeadKind::Classification);
  EXPECT_EQ(k.eval_output_dim(), 2);
}

TEST(Config, CommentsAndWhitespace) {
  const ExperimentConfig c = parse(replace(kMinimal, "[experiment]", "# leading comment\n  [experiment]  # tail"));
  EXPECT_EQ(c.hidden.size(), 2u);
}

TEST(Config, MissingRequiredKeyIsNamed) {
  expect_config_error(replace(kMinimal, "delta = 0.5\n", ""), "consolidation.delta");
  expect_config_error(replace(kMinimal, "steps = 3\n", ""), "phase1.steps");
}

TEST(Config, OutOfRangeCarriesLine) {
  expect_config_error(replace(kMinimal, "lambda = 0.2", "lambda = -1"), "consolidation.lambda", 21);
  expect_config_error(replace(kMinimal, "delta = 0.5", "delta = 1.5"), "delta", 22);
  expect_config_error(replace(kMinimal, "split = 1", "split = 3"), "model.split", 6);
}

TEST(Config, UnknownOrDuplicateOrMalformed) {
  expect_config_error(replace(kMinimal, "split = 1", "split = 1\nwidth = 3"), "width", 7);
  expect_config_error(replace(kMinimal, "[phase3]", "[phase4]"), "phase4", 15);
  expect_config_error(replace(kMinimal, "split = 1", "split = 1\nsplit = 1"), "duplicate", 7);
  expect_config_error(replace(kMinimal, "steps = 3", "steps = three"), "phase1.steps", 10);
  expect_config_error(replace(kMinimal, "alpha = 0.1", "alpha = 0.1x"), "phase1.alpha", 8);
  expect_config_error(replace(kMinimal, "[experiment]", "kind = x\n[experiment]"), "line 2");
  expect_config_error(replace(kMinimal, "kind = sine-regression", "kind = images"), "experiment.kind");
}

TEST(Config, MissingFileIsReported) {
  EXPECT_THROW(config::parse_config_file("/nonexistent/kcciol.cfg"), Error);
}

TEST(Config, HashIsStableAndSensitive) {
  const ExperimentConfig a = parse(kMinimal);
  const ExperimentConfig b = parse(replace(kMinimal, "[model]", "# different comment\n\n[model]"));
  EXPECT_EQ(config::config_hash(a), config::config_hash(b));
  EXPECT_EQ(config::config_hash(a).size(), 16u);
  ExperimentConfig moved = a;
  moved.out = "elsewhere";
  EXPECT_EQ(config::config_hash(moved), config::config_hash(a));
  const ExperimentConfig c = parse(replace(kMinimal, "gamma = 0.1", "gamma = 0.10000000000000001"));
  EXPECT_EQ(config::config_hash(c), config::config_hash(a));
  const ExperimentConfig d = parse(replace(kMinimal, "gamma = 0.1", "gamma = 0.11"));
  EXPECT_NE(config::config_hash(d), config::config_hash(a));
  EXPECT_EQ(config::fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(config::fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}
