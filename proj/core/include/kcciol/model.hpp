// SPDX-License-Identifier: Apache-2.0
//
// Fully connected networks f(x) = g(h(x | theta) | W).
//
// All parameters live in one flat vector (the ParameterStore). Layer l owns a
// weight block of shape fan_in x fan_out (column-major) followed by a 1 x fan_out
// bias block. Layers [0, split_index) form the representation theta and come
// first, so theta is a contiguous prefix of the store and W the suffix.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kcciol/autograd.hpp"

namespace kcciol::model {

using ad::Index;
using ad::Matrix;
using ad::Var;
using ad::Vector;

/// Rectifier between hidden layers; the output layer is linear. For
/// classification the linear output is read as logits.
enum class HeadKind : std::uint8_t { Regression, Classification };

struct ModelSpec {
  std::vector<Index> layer_sizes;  // input dim first, output dim last
  int split_index = 1;             // number of weight layers in theta
  HeadKind head = HeadKind::Regression;

  int weight_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  Index input_dim() const { return layer_sizes.front(); }
  Index output_dim() const { return layer_sizes.back(); }
  std::string activation_tag() const;

  /// Throws UsageError on zero widths or a split outside [1, weight_layers()).
  void validate() const;

  bool operator==(const ModelSpec&) const = default;

  /// Nine 300-wide layers over the 11-dim (z, one-hot task) input, six in theta.
  static ModelSpec sine_paper();
};

HeadKind head_kind_from_tag(const std::string& tag);

enum class Part : std::uint8_t { Representation, Head };

struct Block {
  int layer = 0;
  bool bias = false;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;
  Part part = Part::Representation;

  Index size() const { return rows * cols; }
};

std::vector<Block> layout(const ModelSpec& spec);
Index parameter_count(const ModelSpec& spec);

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(ModelSpec spec, Vector values);

  const ModelSpec& spec() const noexcept { return spec_; }
  const Vector& values() const noexcept { return values_; }
  void set_values(Vector values);

  Index size() const noexcept { return values_.size(); }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  /// Blocks [0, head_block_begin()) belong to theta.
  std::size_t head_block_begin() const noexcept { return head_begin_; }
  Index theta_size() const noexcept { return theta_size_; }
  Index head_size() const noexcept { return values_.size() - theta_size_; }

  Eigen::Map<const Matrix> block(std::size_t i) const;
  auto theta() const { return values_.head(theta_size_); }
  auto head() const { return values_.tail(values_.size() - theta_size_); }

 private:
  ModelSpec spec_;
  Vector values_;
  std::vector<Block> blocks_;
  std::size_t head_begin_ = 0;
  Index theta_size_ = 0;
};

/// Uniform fan-based weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ParameterStore build_model(const ModelSpec& spec, std::uint64_t seed);

/// Keeps theta bit-for-bit, re-initializes every head layer with `seed` and
/// resizes the output layer to out_dim.
ParameterStore replace_head(const ParameterStore& params, Index out_dim, std::uint64_t seed);

// --- plain evaluation (rows of x are samples) -------------------------------

Matrix forward(const ParameterStore& params, const Matrix& x);
Matrix represent(const ParameterStore& params, const Matrix& x);
/// Head applied to precomputed representation features, with the head
/// parameters supplied separately as the flat W suffix.
Matrix head_forward(const ModelSpec& spec, const Vector& head_values, const Matrix& features);

// --- taped evaluation -------------------------------------------------------

/// One differentiable leaf per block, in layout order.
std::vector<Var> bind(ad::Tape& tape, const ParameterStore& params);

/// Leaves for the head blocks only, taken from a flat W vector.
std::vector<Var> bind_head(ad::Tape& tape, const ModelSpec& spec, const Vector& head_values);

Var represent(const ModelSpec& spec, std::span<const Var> theta_blocks, const Var& x);
Var head(const ModelSpec& spec, std::span<const Var> head_blocks, const Var& features);
Var forward(const ModelSpec& spec, std::span<const Var> blocks, const Var& x);

/// Concatenates per-block matrices (e.g. gradients) into store ordering.
Vector flatten(std::span<const Matrix> blocks);

}  // namespace kcciol::model
