// SPDX-License-Identifier: Apache-2.0
//
// Parameter-update rules. The vector overloads are pure functions of their
// arguments; the Var overload records the update on the tape so that later
// gradients flow through it (used by the unrolled inner loop).

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "kcciol/autograd.hpp"

namespace kcciol::optim {

using ad::GradientVector;
using ad::Vector;

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t t = 0;
  AdamHyper hyper;

  static AdamState zeros(ad::Index n, AdamHyper hyper = {});
};

/// params - lr * g
Vector sgd_step(const Vector& params, const GradientVector& g, double lr);

/// Taped version: returns params[i] - lr * g[i] as new tape nodes.
std::vector<ad::Var> sgd_step(std::span<const ad::Var> params, std::span<const ad::Var> g, double lr);

/// Bias-corrected Adam; returns the advanced state and the updated parameters.
std::pair<AdamState, Vector> adam_step(const AdamState& state, const Vector& params,
                                       const GradientVector& g, double lr);

}  // namespace kcciol::optim
