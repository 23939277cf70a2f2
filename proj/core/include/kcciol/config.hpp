// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a sectioned key=value text file.
//
//   # comment
//   [experiment]
//   kind = sine-regression
//   seed = 7
//
// Unknown sections or keys, duplicates, malformed and out-of-range values are
// ConfigErrors carrying the line number. Missing required keys name the key.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "kcciol/metalearner.hpp"
#include "kcciol/model.hpp"

namespace kcciol::config {

enum class ExperimentKind { SineRegression, SyntheticClassification };

const char* kind_name(ExperimentKind kind);

struct SineData {
  int train_functions = 400;
  int test_functions = 500;
  int train_per_function = 1280;
  int val_per_function = 32;
};

struct ClassData {
  int classes = 40;  // size of each pool (meta-train and held-out)
  int dim = 16;
  int per_class = 20;
  double sigma = 0.1;
  int train_classes = 2;  // classes in a meta-training trajectory's tau_tr
  int extra_val_classes = 1;
  int per_class_train = 5;
  int per_class_val = 5;
  int eval_classes = 2;
};

struct EvalSettings {
  double alpha = 0.0;  // defaults to phase 3 alpha
  int inner_batch = 0;  // defaults to phase 3 inner batch (regression only)
  int trajectories = 50;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::SineRegression;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";

  std::vector<ad::Index> hidden;
  int split = 1;

  std::array<meta::PhaseConfig, 3> phases;
  double gamma = 0.0;
  double lambda = 0.0;
  double delta = 0.5;
  bool constraint_first_order = false;

  SineData sine;
  ClassData classification;
  EvalSettings eval;

  /// Network for meta-training (head sized for a training trajectory).
  model::ModelSpec spec() const;
  meta::TrainConfig train_config() const;
  /// Output width of the evaluation head.
  ad::Index eval_output_dim() const;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig parse_config_file(const std::filesystem::path& path);

/// Fully resolved configuration, one `section.key=value` line per field in a
/// fixed order; doubles are printed with 17 significant digits.
std::string canonical_text(const ExperimentConfig& config);

/// 16 hex digits of the 64-bit FNV-1a hash of canonical_text().
std::string config_hash(const ExperimentConfig& config);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace kcciol::config
