// SPDX-License-Identifier: Apache-2.0

#include "kcciol/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "kcciol/errors.hpp"
#include "kcciol/rng.hpp"

namespace kcciol::model {

std::string ModelSpec::activation_tag() const {
  return head == HeadKind::Regression ? "relu/identity" : "relu/logits";
}

HeadKind head_kind_from_tag(const std::string& tag) {
  if (tag == "relu/identity") return HeadKind::Regression;
  if (tag == "relu/logits") return HeadKind::Classification;
  throw UsageError("unknown activation tag '" + tag + "'");
}

void ModelSpec::validate() const {
  if (layer_sizes.size() < 3) {
    throw UsageError("model needs at least two weight layers (one for theta, one for W)");
  }
  for (Index w : layer_sizes) {
    if (w <= 0) throw UsageError("model layer widths must be positive");
  }
  if (split_index < 1 || split_index >= weight_layers()) {
    throw UsageError("split index " + std::to_string(split_index) + " outside [1, " +
                     std::to_string(weight_layers() - 1) + "]");
  }
}

ModelSpec ModelSpec::sine_paper() {
  ModelSpec s;
  s.layer_sizes = {11, 300, 300, 300, 300, 300, 300, 300, 300, 1};
  s.split_index = 6;
  s.head = HeadKind::Regression;
  return s;
}

std::vector<Block> layout(const ModelSpec& spec) {
  spec.validate();
  std::vector<Block> blocks;
  Index offset = 0;
  for (int l = 0; l < spec.weight_layers(); ++l) {
    const Index fan_in = spec.layer_sizes[static_cast<std::size_t>(l)];
    const Index fan_out = spec.layer_sizes[static_cast<std::size_t>(l) + 1];
    const Part part = l < spec.split_index ? Part::Representation : Part::Head;
    blocks.push_back({l, false, fan_in, fan_out, offset, part});
    offset += fan_in * fan_out;
    blocks.push_back({l, true, 1, fan_out, offset, part});
    offset += fan_out;
  }
  return blocks;
}

Index parameter_count(const ModelSpec& spec) {
  const auto blocks = layout(spec);
  return blocks.back().offset + blocks.back().size();
}

ParameterStore::ParameterStore(ModelSpec spec, Vector values)
    : spec_(std::move(spec)), values_(std::move(values)), blocks_(layout(spec_)) {
  const Index expected = blocks_.back().offset + blocks_.back().size();
  if (values_.size() != expected) {
    throw UsageError("parameter store holds " + std::to_string(values_.size()) +
                     " values, spec requires " + std::to_string(expected));
  }
  head_begin_ = static_cast<std::size_t>(2 * spec_.split_index);
  theta_size_ = blocks_[head_begin_].offset;
}

void ParameterStore::set_values(Vector values) {
  if (values.size() != values_.size()) throw UsageError("set_values: size mismatch");
  values_ = std::move(values);
}

Eigen::Map<const Matrix> ParameterStore::block(std::size_t i) const {
  const Block& b = blocks_.at(i);
  return {values_.data() + b.offset, b.rows, b.cols};
}

namespace {

void init_layer(Vector& values, const Block& weight, const Block& bias, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(weight.rows + weight.cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < weight.size(); ++i) values[weight.offset + i] = dist(rng);
  values.segment(bias.offset, bias.size()).setZero();
}

}  // namespace

ParameterStore build_model(const ModelSpec& spec, std::uint64_t seed) {
  const auto blocks = layout(spec);
  Vector values(blocks.back().offset + blocks.back().size());
  for (std::size_t i = 0; i < blocks.size(); i += 2) {
    init_layer(values, blocks[i], blocks[i + 1], derive_seed(seed, static_cast<std::uint64_t>(blocks[i].layer)));
  }
  return ParameterStore(spec, std::move(values));
}

ParameterStore replace_head(const ParameterStore& params, Index out_dim, std::uint64_t seed) {
  if (out_dim < 1) throw UsageError("replace_head: output dimension must be at least 1");
  ModelSpec spec = params.spec();
  spec.layer_sizes.back() = out_dim;
  const auto blocks = layout(spec);
  Vector values(blocks.back().offset + blocks.back().size());
  values.head(params.theta_size()) = params.theta();
  for (std::size_t i = 2 * static_cast<std::size_t>(spec.split_index); i < blocks.size(); i += 2) {
    init_layer(values, blocks[i], blocks[i + 1], derive_seed(seed, static_cast<std::uint64_t>(blocks[i].layer)));
  }
  return ParameterStore(std::move(spec), std::move(values));
}

// --- plain evaluation -------------------------------------------------------

namespace {

void check_input(const ModelSpec& spec, const Matrix& x) {
  if (x.cols() != spec.input_dim()) {
    throw UsageError("input has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(spec.input_dim()));
  }
}

// Applies layers [first, last) of a flat block sequence starting at `base`.
Matrix run_layers(const ModelSpec& spec, const double* base, const std::vector<Block>& blocks,
                  Index offset_shift, int first, int last, Matrix h) {
  for (int l = first; l < last; ++l) {
    const Block& wb = blocks[2 * static_cast<std::size_t>(l)];
    const Block& bb = blocks[2 * static_cast<std::size_t>(l) + 1];
    Eigen::Map<const Matrix> w(base + wb.offset - offset_shift, wb.rows, wb.cols);
    Eigen::Map<const Matrix> b(base + bb.offset - offset_shift, 1, bb.cols);
    Matrix z(h.rows(), wb.cols);
    z.noalias() = h * w;
    z.rowwise() += b.row(0);
    if (l + 1 < spec.weight_layers()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

}  // namespace

Matrix forward(const ParameterStore& params, const Matrix& x) {
  check_input(params.spec(), x);
  return run_layers(params.spec(), params.values().data(), params.blocks(), 0, 0,
                    params.spec().weight_layers(), x);
}

Matrix represent(const ParameterStore& params, const Matrix& x) {
  check_input(params.spec(), x);
  return run_layers(params.spec(), params.values().data(), params.blocks(), 0, 0,
                    params.spec().split_index, x);
}

Matrix head_forward(const ModelSpec& spec, const Vector& head_values, const Matrix& features) {
  const auto blocks = layout(spec);
  const Index shift = blocks[2 * static_cast<std::size_t>(spec.split_index)].offset;
  if (head_values.size() != blocks.back().offset + blocks.back().size() - shift) {
    throw UsageError("head_forward: head parameter count does not match spec");
  }
  if (features.cols() != spec.layer_sizes[static_cast<std::size_t>(spec.split_index)]) {
    throw UsageError("head_forward: feature width does not match spec");
  }
  return run_layers(spec, head_values.data(), blocks, shift, spec.split_index, spec.weight_layers(),
                    features);
}

// --- taped evaluation -------------------------------------------------------

std::vector<Var> bind(ad::Tape& tape, const ParameterStore& params) {
  std::vector<Var> out;
  out.reserve(params.blocks().size());
  for (std::size_t i = 0; i < params.blocks().size(); ++i) {
    out.push_back(tape.variable(Matrix(params.block(i))));
  }
  return out;
}

std::vector<Var> bind_head(ad::Tape& tape, const ModelSpec& spec, const Vector& head_values) {
  const auto blocks = layout(spec);
  const std::size_t first = 2 * static_cast<std::size_t>(spec.split_index);
  const Index shift = blocks[first].offset;
  if (head_values.size() != blocks.back().offset + blocks.back().size() - shift) {
    throw UsageError("bind_head: head parameter count does not match spec");
  }
  std::vector<Var> out;
  for (std::size_t i = first; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    out.push_back(tape.variable(
        Matrix(Eigen::Map<const Matrix>(head_values.data() + b.offset - shift, b.rows, b.cols))));
  }
  return out;
}

namespace {

Var run_layers(const ModelSpec& spec, std::span<const Var> blocks, int first, int last, Var h) {
  if (blocks.size() != 2 * static_cast<std::size_t>(last - first)) {
    throw UsageError("expected " + std::to_string(2 * (last - first)) + " parameter blocks, got " +
                     std::to_string(blocks.size()));
  }
  for (int l = first; l < last; ++l) {
    const std::size_t k = 2 * static_cast<std::size_t>(l - first);
    h = ad::add_bias(ad::matmul(h, blocks[k]), blocks[k + 1]);
    if (l + 1 < spec.weight_layers()) h = ad::relu(h);
  }
  return h;
}

}  // namespace

Var represent(const ModelSpec& spec, std::span<const Var> theta_blocks, const Var& x) {
  if (x.cols() != spec.input_dim()) throw UsageError("represent: input width does not match spec");
  return run_layers(spec, theta_blocks, 0, spec.split_index, x);
}

Var head(const ModelSpec& spec, std::span<const Var> head_blocks, const Var& features) {
  return run_layers(spec, head_blocks, spec.split_index, spec.weight_layers(), features);
}

Var forward(const ModelSpec& spec, std::span<const Var> blocks, const Var& x) {
  const std::size_t split = 2 * static_cast<std::size_t>(spec.split_index);
  if (blocks.size() < split) throw UsageError("forward: too few parameter blocks");
  return head(spec, blocks.subspan(split), represent(spec, blocks.first(split), x));
}

Vector flatten(std::span<const Matrix> blocks) {
  Index n = 0;
  for (const Matrix& b : blocks) n += b.size();
  Vector out(n);
  Index offset = 0;
  for (const Matrix& b : blocks) {
    out.segment(offset, b.size()) = Eigen::Map<const Vector>(b.data(), b.size());
    offset += b.size();
  }
  return out;
}

}  // namespace kcciol::model
