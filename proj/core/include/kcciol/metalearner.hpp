// SPDX-License-Identifier: Apache-2.0
//
// Knowledge-consolidation meta-training.
//
// One outer step:
//   1. W_0 = W; for each batch of the meta-train sequence, in order,
//        W_j = W_{j-1} - alpha * dL(batch | theta, W_{j-1}) / dW_{j-1}
//      recorded on the tape, so W_k is a differentiable function of theta, W_0.
//   2. l_meta       = L(val | theta, W_k)
//      l_constraint = || mask * d l_meta / d[theta, W] ||^2
//      l_1          = || [theta, W] ||_1
//   3. Adam step on [theta, W] with d(l_meta + lambda l_constraint + gamma l_1).
//
// train_full() runs three phases: plain meta-training, an l1 squeeze, then the
// mask is taken from the squeezed weights and the last phase trains with the
// masked gradient constraint.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kcciol/autograd.hpp"
#include "kcciol/mask.hpp"
#include "kcciol/model.hpp"
#include "kcciol/optim.hpp"
#include "kcciol/trajectories.hpp"

namespace kcciol::meta {

using ad::GradientVector;
using ad::Var;
using model::ModelSpec;
using model::ParameterStore;

struct PhaseConfig {
  double alpha = 0.0;   // inner-loop SGD rate
  double beta = 0.0;    // outer-loop Adam rate
  double lambda = 0.0;  // constraint coefficient
  double gamma = 0.0;   // l1 coefficient
  std::int64_t steps = 0;
  int inner_batch = 1;

  void validate() const;
};

struct LossBreakdown {
  double meta = 0.0;
  double constraint = 0.0;
  double l1 = 0.0;
  double total = 0.0;
};

// --- building blocks ---------------------------------------------------------

/// Mean loss of `prediction` against rows [begin, begin + rows) of `set`:
/// squared error for regression heads, softmax cross-entropy for logits.
Var batch_loss(const ModelSpec& spec, const Var& prediction, const data::SampleSet& set, ad::Index begin,
               ad::Index rows);

/// ceil(k / inner_batch) taped SGD steps on the head only.
std::vector<Var> inner_loop(const ModelSpec& spec, std::span<const Var> theta, std::span<const Var> head0,
                            const data::SampleSet& train, double alpha, int inner_batch);

Var meta_loss(const ModelSpec& spec, std::span<const Var> theta, std::span<const Var> head,
              const data::SampleSet& val);

/// sum over masked coordinates of g^2.
double constraint_loss(const Mask& mask, const GradientVector& g);
/// Taped form over per-block gradients laid out like `params`.
Var constraint_loss(const Mask& mask, std::span<const Var> block_grads, const ParameterStore& params);

double l1_penalty(const ad::Vector& params);
Var l1_penalty(std::span<const Var> blocks);

/// Marks the ceil(fraction * n) largest-magnitude entries; ties go to the
/// lower index.
Mask get_mask(const ad::Vector& params, double fraction);

// --- outer loop ---------------------------------------------------------------

struct StepOptions {
  /// Differentiate the constraint only through the outer forward pass
  /// (W_k treated as a leaf) instead of through the whole unroll.
  bool constraint_first_order = false;
};

struct ObjectiveGradient {
  LossBreakdown losses;
  GradientVector gradient;
};

/// Total objective and its gradient w.r.t. the flat store.
ObjectiveGradient objective_gradient(const ParameterStore& params, const data::LearningTrajectory& trajectory,
                                     const Mask* mask, const PhaseConfig& phase,
                                     const StepOptions& options = {});

/// Forward-only value of the same objective (the constraint still needs one
/// backward pass for its inner gradient).
LossBreakdown objective_value(const ParameterStore& params, const data::LearningTrajectory& trajectory,
                              const Mask* mask, const PhaseConfig& phase, const StepOptions& options = {});

struct OuterStepResult {
  ParameterStore params;
  optim::AdamState adam;
  LossBreakdown losses;
};

OuterStepResult outer_step(const ParameterStore& params, const optim::AdamState& adam,
                           const data::LearningTrajectory& trajectory, const Mask* mask,
                           const PhaseConfig& phase, const StepOptions& options = {});

using TrajectorySource = std::function<data::LearningTrajectory(std::uint64_t seed)>;

struct StepRecord {
  std::int64_t step = 0;
  LossBreakdown losses;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct PhaseResult {
  ParameterStore params;
  std::vector<StepRecord> log;
};

/// phase.steps outer steps from fresh Adam state; trajectory i is drawn with
/// derive_seed(seed, i).
PhaseResult kcciol(const TrajectorySource& source, const Mask* mask, ParameterStore params,
                   const PhaseConfig& phase, std::uint64_t seed, const StepOptions& options = {},
                   const StepObserver& observer = {});

// --- three-phase schedule -----------------------------------------------------

struct TrainConfig {
  ModelSpec spec;
  /// Rates, steps and batch per phase; lambda/gamma here are ignored.
  std::array<PhaseConfig, 3> phases;
  double gamma = 0.0;
  double lambda = 0.0;
  double delta = 0.5;
  std::uint64_t seed = 0;
  StepOptions options;
};

/// Effective configuration of phase 1, 2 or 3: gamma only in phase 2, lambda
/// only in phase 3.
PhaseConfig effective_phase(const TrainConfig& config, int phase);
std::uint64_t phase_seed(std::uint64_t master, int phase);
ParameterStore initial_params(const TrainConfig& config);

struct PhaseLog {
  int phase = 0;
  PhaseConfig config;
  std::vector<StepRecord> steps;
};

struct TrainResult {
  ParameterStore params;
  Mask mask;
  std::array<PhaseLog, 3> logs;
};

struct TrainHooks {
  /// Called after each phase with its final parameters (mask only after phase 2+).
  std::function<void(int phase, const ParameterStore&, const Mask*, const PhaseLog&)> phase_end;
  std::function<void(int phase, const StepRecord&)> step;
};

TrainResult train_full(const TrainConfig& config, const TrajectorySource& source, const TrainHooks& hooks = {});

/// Phase 3 alone, starting from phase-2 parameters with the mask for `delta`.
PhaseResult constrained_phase(const TrainConfig& config, const ParameterStore& phase2, double delta,
                              const TrajectorySource& source, std::uint64_t seed, Mask* mask_out = nullptr);

}  // namespace kcciol::meta
