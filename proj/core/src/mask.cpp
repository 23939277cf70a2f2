// SPDX-License-Identifier: Apache-2.0

#include "kcciol/mask.hpp"

#include <algorithm>
#include <cmath>

#include "kcciol/errors.hpp"

namespace kcciol {

Eigen::Index important_count(double fraction, Eigen::Index n) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw UsageError("mask fraction must lie in [0, 1]");
  const double product = fraction * static_cast<double>(n);
  const double nearest = std::round(product);
  const double k = std::abs(product - nearest) <= 1e-9 ? nearest : std::ceil(product);
  return std::clamp<Eigen::Index>(static_cast<Eigen::Index>(k), 0, n);
}

Mask::Mask(std::vector<std::uint8_t> bits, double fraction, double threshold)
    : bits_(std::move(bits)), fraction_(fraction), threshold_(threshold) {
  for (std::uint8_t& b : bits_) {
    if (b > 1) throw UsageError("mask bits must be 0 or 1");
    count_ += b;
  }
}

Mask Mask::zeros(Eigen::Index n) {
  return Mask(std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0), 0.0);
}

Eigen::VectorXd Mask::as_vector() const {
  Eigen::VectorXd v(size());
  for (Eigen::Index i = 0; i < size(); ++i) v[i] = bits_[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace kcciol
