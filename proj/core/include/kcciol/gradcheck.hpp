// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference check of the full outer objective on tiny networks:
// every (net, unroll length k, lambda, gamma) combination in a fixed grid.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kcciol/metalearner.hpp"

namespace kcciol::gradcheck {

struct CaseResult {
  std::string name;
  int inner_steps = 0;
  double lambda = 0.0;
  double gamma = 0.0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  int redraws = 0;  // instances rejected because the stencil crossed a kink

  bool ok() const { return max_rel_error <= tolerance; }
};

struct SuiteOptions {
  double eps = 1e-5;
  std::uint64_t seed = 0;
  bool constraint_first_order = false;
};

/// max_i |a_i - f_i| / max(max_i |f_i|, 1e-8)
double relative_error(const ad::Vector& analytic, const ad::Vector& numeric);

/// Analytic vs central-difference gradient of l_meta + lambda l_constraint +
/// gamma l_1 for one case.
double check_objective(const model::ParameterStore& params, const data::LearningTrajectory& trajectory,
                       const Mask* mask, const meta::PhaseConfig& phase, const meta::StepOptions& options,
                       double eps);

/// Nets up to 3 weight layers of width 8, k in {0, 1, 2},
/// (lambda, gamma) in {0, 0.5}^2. Tolerance 1e-3, or 1e-4 when lambda = 0.
std::vector<CaseResult> run_suite(const SuiteOptions& options = {});

}  // namespace kcciol::gradcheck
