// SPDX-License-Identifier: Apache-2.0

#include "kcciol/optim.hpp"

#include <cmath>
#include <string>

#include "kcciol/errors.hpp"

namespace kcciol::optim {

AdamState AdamState::zeros(ad::Index n, AdamHyper hyper) {
  AdamState s;
  s.m = Vector::Zero(n);
  s.v = Vector::Zero(n);
  s.hyper = hyper;
  return s;
}

Vector sgd_step(const Vector& params, const GradientVector& g, double lr) {
  if (params.size() != g.size()) {
    throw UsageError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(g.size()) + " gradient entries");
  }
  if (lr < 0.0) throw UsageError("sgd_step: negative learning rate");
  return params - lr * g;
}

std::vector<ad::Var> sgd_step(std::span<const ad::Var> params, std::span<const ad::Var> g, double lr) {
  if (params.size() != g.size()) throw UsageError("sgd_step: parameter/gradient count mismatch");
  if (lr < 0.0) throw UsageError("sgd_step: negative learning rate");
  std::vector<ad::Var> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(ad::sub(params[i], ad::scale(g[i], lr)));
  }
  return out;
}

std::pair<AdamState, Vector> adam_step(const AdamState& state, const Vector& params,
                                       const GradientVector& g, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size() ||
      g.size() != params.size()) {
    throw UsageError("adam_step: state, parameter and gradient sizes differ");
  }
  if (lr < 0.0) throw UsageError("adam_step: negative learning rate");
  const AdamHyper& h = state.hyper;
  AdamState next = state;
  next.t = state.t + 1;
  next.m = h.beta1 * state.m + (1.0 - h.beta1) * g;
  next.v = h.beta2 * state.v + (1.0 - h.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(next.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(next.t));
  Vector updated = params.array() - lr * (next.m.array() / c1) /
                                        ((next.v.array() / c2).sqrt() + h.eps);
  return {std::move(next), std::move(updated)};
}

}  // namespace kcciol::optim
