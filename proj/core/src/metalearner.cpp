// SPDX-License-Identifier: Apache-2.0

#include "kcciol/metalearner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include "kcciol/errors.hpp"
#include "kcciol/rng.hpp"

namespace kcciol::meta {

using ad::Index;
using ad::Matrix;

void PhaseConfig::validate() const {
  for (double v : {alpha, beta, lambda, gamma}) {
    if (!std::isfinite(v) || v < 0.0) throw UsageError("phase rates and coefficients must be finite and >= 0");
  }
  if (steps < 0) throw UsageError("phase steps must be >= 0");
  if (inner_batch < 1) throw UsageError("inner batch must be >= 1");
}

// --- building blocks ---------------------------------------------------------

Var batch_loss(const ModelSpec& spec, const Var& prediction, const data::SampleSet& set, Index begin,
               Index rows) {
  ad::Tape& tape = *prediction.tape();
  if (spec.head == model::HeadKind::Regression) {
    if (set.target.rows() != set.size()) throw UsageError("regression loss needs per-sample targets");
    return ad::mse(prediction, tape.constant(Matrix(set.target.middleRows(begin, rows))));
  }
  return ad::softmax_cross_entropy(
      prediction, tape.constant(data::one_hot(set.label, begin, rows, static_cast<int>(spec.output_dim()))));
}

std::vector<Var> inner_loop(const ModelSpec& spec, std::span<const Var> theta, std::span<const Var> head0,
                            const data::SampleSet& train, double alpha, int inner_batch) {
  if (inner_batch < 1) throw UsageError("inner batch must be >= 1");
  if (head0.empty() || theta.empty()) throw UsageError("inner loop needs theta and head blocks");
  if (train.size() > 0 && train.x.cols() != spec.input_dim()) {
    throw UsageError("meta-train inputs do not match the model input width");
  }
  ad::Tape& tape = *head0.front().tape();
  std::vector<Var> w(head0.begin(), head0.end());
  for (Index begin = 0; begin < train.size(); begin += inner_batch) {
    const Index rows = std::min<Index>(inner_batch, train.size() - begin);
    const Var x = tape.constant(Matrix(train.x.middleRows(begin, rows)));
    const Var prediction = model::head(spec, w, model::represent(spec, theta, x));
    const Var loss = batch_loss(spec, prediction, train, begin, rows);
    const std::vector<Var> g = ad::grad(loss, w);
    w = optim::sgd_step(w, g, alpha);
  }
  return w;
}

Var meta_loss(const ModelSpec& spec, std::span<const Var> theta, std::span<const Var> head,
              const data::SampleSet& val) {
  if (val.size() == 0) throw UsageError("meta loss needs a non-empty validation set");
  ad::Tape& tape = *head.front().tape();
  const Var x = tape.constant(val.x);
  const Var prediction = model::head(spec, head, model::represent(spec, theta, x));
  return batch_loss(spec, prediction, val, 0, val.size());
}

double constraint_loss(const Mask& mask, const GradientVector& g) {
  if (mask.size() != g.size()) throw UsageError("constraint loss: mask and gradient lengths differ");
  return g.cwiseProduct(mask.as_vector()).squaredNorm();
}

Var constraint_loss(const Mask& mask, std::span<const Var> block_grads, const ParameterStore& params) {
  if (mask.size() != params.size() || block_grads.size() != params.blocks().size()) {
    throw UsageError("constraint loss: mask, gradient and store layouts differ");
  }
  ad::Tape& tape = *block_grads.front().tape();
  const Eigen::VectorXd bits = mask.as_vector();
  std::vector<Var> terms;
  for (std::size_t i = 0; i < block_grads.size(); ++i) {
    const model::Block& b = params.blocks()[i];
    const auto segment = bits.segment(b.offset, b.size());
    if (segment.sum() == 0.0) continue;
    const Var m = tape.constant(Matrix(Eigen::Map<const Matrix>(segment.data(), b.rows, b.cols)));
    terms.push_back(ad::sum(ad::square(ad::mul(block_grads[i], m))));
  }
  if (terms.empty()) return tape.constant(0.0);
  return ad::add_n(terms);
}

double l1_penalty(const ad::Vector& params) { return params.lpNorm<1>(); }

Var l1_penalty(std::span<const Var> blocks) {
  std::vector<Var> terms;
  terms.reserve(blocks.size());
  for (const Var& b : blocks) terms.push_back(ad::sum(ad::abs(b)));
  return ad::add_n(terms);
}

Mask get_mask(const ad::Vector& params, double fraction) {
  ad::require_finite(params, "parameters passed to get_mask");
  const Index n = params.size();
  const Index k = important_count(fraction, n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto more_important = [&](Index a, Index b) {
    const double ma = std::abs(params[a]);
    const double mb = std::abs(params[b]);
    return ma > mb || (ma == mb && a < b);
  };
  std::nth_element(order.begin(), order.begin() + k, order.end(), more_important);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n), 0);
  double threshold = 0.0;
  for (Index i = 0; i < k; ++i) {
    const Index idx = order[static_cast<std::size_t>(i)];
    bits[static_cast<std::size_t>(idx)] = 1;
    const double m = std::abs(params[idx]);
    threshold = i == 0 ? m : std::min(threshold, m);
  }
  return Mask(std::move(bits), fraction, threshold);
}

// --- outer loop ---------------------------------------------------------------

namespace {

struct BuiltObjective {
  LossBreakdown losses;
  Var total;
  std::vector<Var> blocks;
  std::vector<Var> detached_head;  // first-order constraint only
};

BuiltObjective build_objective(ad::Tape& tape, const ParameterStore& params,
                               const data::LearningTrajectory& trajectory, const Mask* mask,
                               const PhaseConfig& phase, const StepOptions& options) {
  phase.validate();
  const ModelSpec& spec = params.spec();
  BuiltObjective obj;
  obj.blocks = model::bind(tape, params);
  const std::span<const Var> all(obj.blocks);
  const std::span<const Var> theta = all.first(params.head_block_begin());
  const std::span<const Var> head0 = all.subspan(params.head_block_begin());

  const std::vector<Var> head_k = inner_loop(spec, theta, head0, trajectory.train, phase.alpha, phase.inner_batch);
  const Var l_meta = meta_loss(spec, theta, head_k, trajectory.val);
  std::vector<Var> terms{l_meta};
  obj.losses.meta = l_meta.scalar();
  obj.losses.l1 = l1_penalty(params.values());

  if (phase.gamma > 0.0) terms.push_back(ad::scale(l1_penalty(all), phase.gamma));

  if (phase.lambda > 0.0) {
    if (mask == nullptr) throw UsageError("a mask is required when lambda > 0");
    if (mask->size() != params.size()) throw UsageError("mask length does not match parameter count");
    if (mask->count() > 0) {
      Var l_constraint;
      if (!options.constraint_first_order) {
        l_constraint = constraint_loss(*mask, ad::grad(l_meta, all), params);
      } else {
        for (const Var& w : head_k) obj.detached_head.push_back(tape.variable(w.value()));
        const Var l_outer = meta_loss(spec, theta, obj.detached_head, trajectory.val);
        std::vector<Var> wrt(theta.begin(), theta.end());
        wrt.insert(wrt.end(), obj.detached_head.begin(), obj.detached_head.end());
        l_constraint = constraint_loss(*mask, ad::grad(l_outer, wrt), params);
      }
      obj.losses.constraint = l_constraint.scalar();
      terms.push_back(ad::scale(l_constraint, phase.lambda));
    }
  }

  obj.total = ad::add_n(terms);
  obj.losses.total = obj.total.scalar();
  return obj;
}

}  // namespace

ObjectiveGradient objective_gradient(const ParameterStore& params, const data::LearningTrajectory& trajectory,
                                     const Mask* mask, const PhaseConfig& phase, const StepOptions& options) {
  ad::Tape tape;
  BuiltObjective obj = build_objective(tape, params, trajectory, mask, phase, options);
  std::vector<Var> wrt = obj.blocks;
  wrt.insert(wrt.end(), obj.detached_head.begin(), obj.detached_head.end());
  std::vector<Matrix> grads = ad::grad_values(obj.total, wrt);
  const std::size_t hb = params.head_block_begin();
  for (std::size_t i = 0; i < obj.detached_head.size(); ++i) {
    grads[hb + i] += grads[obj.blocks.size() + i];
  }
  grads.resize(obj.blocks.size());
  ObjectiveGradient out{obj.losses, model::flatten(grads)};
  ad::require_finite(out.gradient, "objective gradient");
  return out;
}

LossBreakdown objective_value(const ParameterStore& params, const data::LearningTrajectory& trajectory,
                              const Mask* mask, const PhaseConfig& phase, const StepOptions& options) {
  ad::Tape tape;
  return build_objective(tape, params, trajectory, mask, phase, options).losses;
}

OuterStepResult outer_step(const ParameterStore& params, const optim::AdamState& adam,
                           const data::LearningTrajectory& trajectory, const Mask* mask,
                           const PhaseConfig& phase, const StepOptions& options) {
  ObjectiveGradient obj = objective_gradient(params, trajectory, mask, phase, options);
  auto [next_adam, values] = optim::adam_step(adam, params.values(), obj.gradient, phase.beta);
  ad::require_finite(values, "updated parameters");
  return {ParameterStore(params.spec(), std::move(values)), std::move(next_adam), obj.losses};
}

PhaseResult kcciol(const TrajectorySource& source, const Mask* mask, ParameterStore params,
                   const PhaseConfig& phase, std::uint64_t seed, const StepOptions& options,
                   const StepObserver& observer) {
  phase.validate();
  PhaseResult result;
  result.log.reserve(static_cast<std::size_t>(phase.steps));
  optim::AdamState adam = optim::AdamState::zeros(params.size());
  for (std::int64_t i = 0; i < phase.steps; ++i) {
    const data::LearningTrajectory trajectory = source(derive_seed(seed, static_cast<std::uint64_t>(i)));
    try {
      OuterStepResult step = outer_step(params, adam, trajectory, mask, phase, options);
      params = std::move(step.params);
      adam = std::move(step.adam);
      result.log.push_back({i, step.losses});
    } catch (const NumericError& e) {
      throw NumericError("outer step " + std::to_string(i) + ": " + e.what());
    }
    if (observer) observer(result.log.back());
  }
  result.params = std::move(params);
  return result;
}

// --- three-phase schedule -----------------------------------------------------

PhaseConfig effective_phase(const TrainConfig& config, int phase) {
  if (phase < 1 || phase > 3) throw UsageError("phase must be 1, 2 or 3");
  PhaseConfig p = config.phases[static_cast<std::size_t>(phase - 1)];
  p.gamma = phase == 2 ? config.gamma : 0.0;
  p.lambda = phase == 3 ? config.lambda : 0.0;
  return p;
}

std::uint64_t phase_seed(std::uint64_t master, int phase) {
  return derive_seed(master, static_cast<std::uint64_t>(phase));
}

ParameterStore initial_params(const TrainConfig& config) {
  return model::build_model(config.spec, phase_seed(config.seed, 0));
}

TrainResult train_full(const TrainConfig& config, const TrajectorySource& source, const TrainHooks& hooks) {
  if (!(config.delta >= 0.0 && config.delta <= 1.0)) throw UsageError("delta must lie in [0, 1]");
  TrainResult result;
  ParameterStore params = initial_params(config);
  std::optional<Mask> mask;
  for (int p = 1; p <= 3; ++p) {
    const PhaseConfig cfg = effective_phase(config, p);
    StepObserver observer;
    if (hooks.step) observer = [&hooks, p](const StepRecord& r) { hooks.step(p, r); };
    PhaseResult run = kcciol(source, p == 3 ? &*mask : nullptr, std::move(params), cfg,
                             phase_seed(config.seed, p), config.options, observer);
    params = std::move(run.params);
    result.logs[static_cast<std::size_t>(p - 1)] = {p, cfg, std::move(run.log)};
    if (p == 2) mask = get_mask(params.values(), config.delta);
    if (hooks.phase_end) {
      hooks.phase_end(p, params, p >= 2 ? &*mask : nullptr, result.logs[static_cast<std::size_t>(p - 1)]);
    }
  }
  result.params = std::move(params);
  result.mask = std::move(*mask);
  return result;
}

PhaseResult constrained_phase(const TrainConfig& config, const ParameterStore& phase2, double delta,
                              const TrajectorySource& source, std::uint64_t seed, Mask* mask_out) {
  Mask mask = get_mask(phase2.values(), delta);
  PhaseResult r = kcciol(source, &mask, phase2, effective_phase(config, 3), seed, config.options);
  if (mask_out != nullptr) *mask_out = std::move(mask);
  return r;
}

}  // namespace kcciol::meta
