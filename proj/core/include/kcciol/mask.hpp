// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace kcciol {

/// Number of important parameters for fraction `fraction` of `n`: ceil(fraction * n),
/// with products within 1e-9 of an integer snapped to it so that e.g.
/// 0.7 * 100 counts as 70 rather than 71.
Eigen::Index important_count(double fraction, Eigen::Index n);

/// Binary importance indicator aligned with a ParameterStore. 1 marks an
/// important (protected) parameter, 0 a free one. Immutable once built.
class Mask {
 public:
  Mask() = default;
  Mask(std::vector<std::uint8_t> bits, double fraction, double threshold = 0.0);

  static Mask zeros(Eigen::Index n);

  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(bits_.size()); }
  Eigen::Index count() const noexcept { return count_; }
  /// Target fraction |A_I| / |A| the mask was built for.
  double fraction() const noexcept { return fraction_; }
  /// Smallest magnitude inside the important set (0 when the set is empty).
  double threshold() const noexcept { return threshold_; }
  bool test(Eigen::Index i) const { return bits_.at(static_cast<std::size_t>(i)) != 0; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  /// Bits as a 0/1 vector, handy for elementwise products.
  Eigen::VectorXd as_vector() const;

  bool operator==(const Mask& other) const { return bits_ == other.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
  Eigen::Index count_ = 0;
  double fraction_ = 0.0;
  double threshold_ = 0.0;
};

}  // namespace kcciol
