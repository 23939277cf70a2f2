// SPDX-License-Identifier: Apache-2.0

#include "kcciol/gradcheck.hpp"

#include <algorithm>
#include <random>

#include "kcciol/errors.hpp"
#include "kcciol/rng.hpp"

namespace kcciol::gradcheck {

using ad::Matrix;
using ad::Vector;

double relative_error(const Vector& analytic, const Vector& numeric) {
  if (analytic.size() != numeric.size()) throw UsageError("relative_error: length mismatch");
  if (analytic.size() == 0) return 0.0;
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-8);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

double check_objective(const model::ParameterStore& params, const data::LearningTrajectory& trajectory,
                       const Mask* mask, const meta::PhaseConfig& phase, const meta::StepOptions& options,
                       double eps) {
  const Vector analytic = meta::objective_gradient(params, trajectory, mask, phase, options).gradient;
  const auto f = [&](const Vector& v) {
    return meta::objective_value(model::ParameterStore(params.spec(), v), trajectory, mask, phase, options).total;
  };
  return relative_error(analytic, ad::finite_diff_grad(f, params.values(), eps));
}

namespace {

struct Net {
  const char* name;
  model::ModelSpec spec;
};

std::vector<Net> nets() {
  std::vector<Net> out;
  auto add = [&](const char* name, std::vector<ad::Index> sizes, int split, model::HeadKind head) {
    model::ModelSpec s;
    s.layer_sizes = std::move(sizes);
    s.split_index = split;
    s.head = head;
    out.push_back({name, s});
  };
  add("2x8 regression", {3, 8, 1}, 1, model::HeadKind::Regression);
  add("3x8 regression split1", {3, 8, 8, 1}, 1, model::HeadKind::Regression);
  add("3x8 regression split2", {3, 8, 8, 1}, 2, model::HeadKind::Regression);
  add("3x8 classification", {3, 8, 8, 3}, 2, model::HeadKind::Classification);
  return out;
}

data::SampleSet random_set(const model::ModelSpec& spec, int rows, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  data::SampleSet s;
  s.x.resize(rows, spec.input_dim());
  for (ad::Index i = 0; i < s.x.size(); ++i) s.x.data()[i] = normal(rng);
  const int classes = static_cast<int>(spec.output_dim());
  for (int r = 0; r < rows; ++r) {
    s.label.push_back(spec.head == model::HeadKind::Classification ? r % classes : 0);
    s.source.push_back(r);
  }
  if (spec.head == model::HeadKind::Regression) {
    s.target.resize(rows, 1);
    for (int r = 0; r < rows; ++r) s.target(r, 0) = normal(rng);
  }
  return s;
}

// The objective is only piecewise smooth (ReLU, |w| and, through the
// constraint, the ReLU derivative). A stencil that straddles a switching
// point shows up as disagreement between the eps and eps/2 estimates; such
// instances are redrawn rather than scored.
constexpr double kStencilAgreement = 1e-5;
constexpr int kMaxRedraws = 50;

struct Instance {
  model::ParameterStore params;
  data::LearningTrajectory trajectory;
  Mask mask;
};

Instance draw_instance(const model::ModelSpec& spec, int k, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  model::ParameterStore params = model::build_model(spec, rng());
  Vector v = params.values();
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (ad::Index i = 0; i < v.size(); ++i) v[i] += jitter(rng);
  params.set_values(v);
  data::LearningTrajectory t;
  t.train = random_set(spec, k, rng);
  t.val = random_set(spec, 4, rng);
  Vector scores(v.size());
  for (ad::Index i = 0; i < scores.size(); ++i) scores[i] = jitter(rng);
  return {std::move(params), std::move(t), meta::get_mask(scores, 0.5)};
}

}  // namespace

std::vector<CaseResult> run_suite(const SuiteOptions& options) {
  std::vector<CaseResult> results;
  std::uint64_t case_index = 0;
  for (const Net& net : nets()) {
    for (int k = 0; k <= 2; ++k) {
      for (double lambda : {0.0, 0.5}) {
        for (double gamma : {0.0, 0.5}) {
          CaseResult r;
          r.name = net.name;
          r.inner_steps = k;
          r.lambda = lambda;
          r.gamma = gamma;
          r.tolerance = lambda == 0.0 ? 1e-4 : 1e-3;
          const std::uint64_t case_seed = derive_seed(options.seed, case_index++);
          for (int attempt = 0;; ++attempt) {
            if (attempt == kMaxRedraws) throw NumericError("gradcheck: no kink-free instance for " + r.name);
            const Instance in = draw_instance(net.spec, k, derive_seed(case_seed, static_cast<std::uint64_t>(attempt)));
            const meta::PhaseConfig phase{0.1, 1e-3, lambda, gamma, 1, 1};
            const meta::StepOptions step{options.constraint_first_order};
            const auto f = [&](const Vector& v) {
              return meta::objective_value(model::ParameterStore(net.spec, v), in.trajectory, &in.mask, phase, step)
                  .total;
            };
            const Vector numeric = ad::finite_diff_grad(f, in.params.values(), options.eps);
            const Vector half = ad::finite_diff_grad(f, in.params.values(), options.eps / 2);
            if (relative_error(half, numeric) > kStencilAgreement) {
              ++r.redraws;
              continue;
            }
            const Vector analytic = meta::objective_gradient(in.params, in.trajectory, &in.mask, phase, step).gradient;
            r.max_rel_error = relative_error(analytic, numeric);
            break;
          }
          results.push_back(r);
        }
      }
    }
  }
  return results;
}

}  // namespace kcciol::gradcheck
