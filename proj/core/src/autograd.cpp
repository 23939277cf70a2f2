// SPDX-License-Identifier: Apache-2.0

#include "kcciol/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "kcciol/errors.hpp"

namespace kcciol::ad {

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::MatMul: return "matmul";
    case Op::AddBias: return "add_bias";
    case Op::SumRows: return "sum_rows";
    case Op::BroadcastRows: return "broadcast_rows";
    case Op::RowSum: return "row_sum";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::Relu: return "relu";
    case Op::ReluGrad: return "relu_grad";
    case Op::Abs: return "abs";
    case Op::SignMul: return "sign_mul";
    case Op::Square: return "square";
    case Op::Sum: return "sum";
    case Op::BroadcastScalar: return "broadcast_scalar";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Softmax: return "softmax";
    case Op::Mse: return "mse";
    case Op::SoftmaxXent: return "softmax_xent";
    case Op::AddN: return "add_n";
  }
  return "?";
}

void require_finite(const Eigen::Ref<const Matrix>& values, const char* what) {
  if (!values.allFinite()) {
    throw NumericError(std::string("non-finite value in ") + what);
  }
}

// --- value kernels ---------------------------------------------------------
//
// Shared by forward recording and by the numeric backward pass.

namespace kernel {
namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw UsageError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b, bool ta, bool tb) {
  const Index inner_a = ta ? a.rows() : a.cols();
  const Index inner_b = tb ? b.cols() : b.rows();
  if (inner_a != inner_b) {
    throw UsageError("matmul: inner dimensions " + std::to_string(inner_a) + " and " +
                     std::to_string(inner_b) + " differ");
  }
  Matrix r(ta ? a.cols() : a.rows(), tb ? b.rows() : b.cols());
  if (!ta && !tb) {
    r.noalias() = a * b;
  } else if (ta && !tb) {
    r.noalias() = a.transpose() * b;
  } else if (!ta && tb) {
    r.noalias() = a * b.transpose();
  } else {
    r.noalias() = a.transpose() * b.transpose();
  }
  return r;
}

Matrix add_bias(const Matrix& x, const Matrix& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) throw UsageError("add_bias: bias must be 1 x cols(x)");
  Matrix r = x;
  r.rowwise() += b.row(0);
  return r;
}

Matrix relu_grad(const Matrix& g, const Matrix& x) {
  same_shape(g, x, "relu_grad");
  return (x.array() > 0.0).select(g, 0.0);
}

Matrix sign_mul(const Matrix& g, const Matrix& x) {
  same_shape(g, x, "sign_mul");
  return g.cwiseProduct(x.cwiseSign());
}

Matrix softmax(const Matrix& z) {
  Matrix s = z;
  for (Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp().matrix();
    s.row(i) /= s.row(i).sum();
  }
  return s;
}

Matrix scalar(double v) {
  Matrix r(1, 1);
  r(0, 0) = v;
  return r;
}

double softmax_xent(const Matrix& z, const Matrix& target) {
  same_shape(z, target, "softmax_cross_entropy");
  if (z.rows() == 0) throw UsageError("softmax_cross_entropy: empty batch");
  double total = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    total += (target.row(i).array() * (lse - z.row(i).array())).sum();
  }
  return total / static_cast<double>(z.rows());
}

}  // namespace
}  // namespace kernel

// --- Var / Tape ------------------------------------------------------------

const Matrix& Var::value() const {
  if (!valid()) throw UsageError("use of an unbound Var");
  return tape_->node(index_).value;
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw UsageError("scalar(): node is not 1 x 1");
  return v(0, 0);
}

bool Var::needs_grad() const {
  if (!valid()) throw UsageError("use of an unbound Var");
  return tape_->node(index_).needs_grad;
}

Var Tape::variable(Matrix value) {
  Node n;
  n.op = Op::Leaf;
  n.needs_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(double value) { return constant(kernel::scalar(value)); }

Var Tape::var(std::int32_t index) {
  if (index < 0 || static_cast<std::size_t>(index) >= nodes_.size()) {
    throw UsageError("tape index out of range");
  }
  return Var(this, index);
}

Var Tape::push(Node node) {
  if (!node.value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(node.op) +
                       " node #" + std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

// --- recording -------------------------------------------------------------

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw UsageError("use of an unbound Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw UsageError("operands live on different tapes");
  return t;
}

Var record_unary(Op op, const Var& a, Matrix value, bool differentiable = true) {
  Tape& t = tape_of(a);
  Node n;
  n.op = op;
  n.a = a.index();
  n.needs_grad = differentiable && a.needs_grad();
  n.value = std::move(value);
  return t.push(std::move(n));
}

Var record_binary(Op op, const Var& a, const Var& b, Matrix value, bool grad_a = true,
                  bool grad_b = true) {
  Tape& t = tape_of(a, b);
  Node n;
  n.op = op;
  n.a = a.index();
  n.b = b.index();
  n.needs_grad = (grad_a && a.needs_grad()) || (grad_b && b.needs_grad());
  n.value = std::move(value);
  return t.push(std::move(n));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  kernel::same_shape(a.value(), b.value(), "add");
  return record_binary(Op::Add, a, b, a.value() + b.value());
}

Var sub(const Var& a, const Var& b) {
  kernel::same_shape(a.value(), b.value(), "sub");
  return record_binary(Op::Sub, a, b, a.value() - b.value());
}

Var mul(const Var& a, const Var& b) {
  kernel::same_shape(a.value(), b.value(), "mul");
  return record_binary(Op::Mul, a, b, a.value().cwiseProduct(b.value()));
}

Var scale(const Var& a, double factor) {
  Tape& t = tape_of(a);
  Node n;
  n.op = Op::Scale;
  n.a = a.index();
  n.scalar = factor;
  n.needs_grad = a.needs_grad();
  n.value = factor * a.value();
  return t.push(std::move(n));
}

Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  Tape& t = tape_of(a, b);
  Node n;
  n.op = Op::MatMul;
  n.a = a.index();
  n.b = b.index();
  n.transpose_a = transpose_a;
  n.transpose_b = transpose_b;
  n.needs_grad = a.needs_grad() || b.needs_grad();
  n.value = kernel::matmul(a.value(), b.value(), transpose_a, transpose_b);
  return t.push(std::move(n));
}

Var add_bias(const Var& x, const Var& bias) {
  return record_binary(Op::AddBias, x, bias, kernel::add_bias(x.value(), bias.value()));
}

Var sum_rows(const Var& x) { return record_unary(Op::SumRows, x, x.value().colwise().sum()); }

Var broadcast_rows(const Var& row, Index rows) {
  if (row.rows() != 1) throw UsageError("broadcast_rows: operand must have one row");
  return record_unary(Op::BroadcastRows, row, row.value().replicate(rows, 1));
}

Var row_sum(const Var& x) { return record_unary(Op::RowSum, x, x.value().rowwise().sum()); }

Var broadcast_cols(const Var& col, Index cols) {
  if (col.cols() != 1) throw UsageError("broadcast_cols: operand must have one column");
  return record_unary(Op::BroadcastCols, col, col.value().replicate(1, cols));
}

Var relu(const Var& x) { return record_unary(Op::Relu, x, x.value().cwiseMax(0.0)); }

Var relu_grad(const Var& g, const Var& x) {
  return record_binary(Op::ReluGrad, g, x, kernel::relu_grad(g.value(), x.value()), true, false);
}

Var abs(const Var& x) { return record_unary(Op::Abs, x, x.value().cwiseAbs()); }

Var sign_mul(const Var& g, const Var& x) {
  return record_binary(Op::SignMul, g, x, kernel::sign_mul(g.value(), x.value()), true, false);
}

Var square(const Var& x) { return record_unary(Op::Square, x, x.value().cwiseAbs2()); }

Var sum(const Var& x) { return record_unary(Op::Sum, x, kernel::scalar(x.value().sum())); }

Var broadcast_scalar(const Var& s, Index rows, Index cols) {
  return record_unary(Op::BroadcastScalar, s, Matrix::Constant(rows, cols, s.scalar()));
}

Var sin(const Var& x) { return record_unary(Op::Sin, x, x.value().array().sin().matrix()); }

Var cos(const Var& x) { return record_unary(Op::Cos, x, x.value().array().cos().matrix()); }

Var softmax(const Var& logits) { return record_unary(Op::Softmax, logits, kernel::softmax(logits.value())); }

Var mse(const Var& prediction, const Var& target) {
  kernel::same_shape(prediction.value(), target.value(), "mse");
  if (prediction.value().size() == 0) throw UsageError("mse: empty batch");
  const double v = (prediction.value() - target.value()).squaredNorm() /
                   static_cast<double>(prediction.value().size());
  return record_binary(Op::Mse, prediction, target, kernel::scalar(v));
}

Var softmax_cross_entropy(const Var& logits, const Var& target_distribution) {
  const double v = kernel::softmax_xent(logits.value(), target_distribution.value());
  return record_binary(Op::SoftmaxXent, logits, target_distribution, kernel::scalar(v), true, false);
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw UsageError("add_n: no operands");
  if (terms.size() == 1) return terms[0];
  Tape& t = tape_of(terms[0]);
  Node n;
  n.op = Op::AddN;
  n.value = terms[0].value();
  n.a = terms[0].index();
  n.needs_grad = terms[0].needs_grad();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    if (terms[i].tape() != &t) throw UsageError("operands live on different tapes");
    kernel::same_shape(n.value, terms[i].value(), "add_n");
    n.value += terms[i].value();
    n.needs_grad = n.needs_grad || terms[i].needs_grad();
    if (i == 1) {
      n.b = terms[i].index();
    } else {
      n.more.push_back(terms[i].index());
    }
  }
  return t.push(std::move(n));
}

// --- backward rules --------------------------------------------------------
//
// One set of vector-Jacobian rules, instantiated twice: on plain matrices for
// grad_values() and on Vars for grad(). The Var instantiation only uses
// recorded primitives, which is what makes gradients differentiable again.

namespace {

struct NumericOps {
  using Value = Matrix;
  const Tape& tape;

  const Matrix& in(std::int32_t i) const { return tape.node(i).value; }
  static Matrix add(const Matrix& a, const Matrix& b) { return a + b; }
  static Matrix sub(const Matrix& a, const Matrix& b) { return a - b; }
  static Matrix mul(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b); }
  static Matrix scale(const Matrix& a, double c) { return c * a; }
  static Matrix matmul(const Matrix& a, const Matrix& b, bool ta, bool tb) {
    return kernel::matmul(a, b, ta, tb);
  }
  static Matrix sum_rows(const Matrix& a) { return a.colwise().sum(); }
  static Matrix broadcast_rows(const Matrix& a, Index n) { return a.replicate(n, 1); }
  static Matrix row_sum(const Matrix& a) { return a.rowwise().sum(); }
  static Matrix broadcast_cols(const Matrix& a, Index m) { return a.replicate(1, m); }
  static Matrix relu_grad(const Matrix& g, const Matrix& x) { return kernel::relu_grad(g, x); }
  static Matrix sign_mul(const Matrix& g, const Matrix& x) { return kernel::sign_mul(g, x); }
  static Matrix sum(const Matrix& a) { return kernel::scalar(a.sum()); }
  static Matrix broadcast_scalar(const Matrix& s, Index r, Index c) {
    return Matrix::Constant(r, c, s(0, 0));
  }
  static Matrix sin(const Matrix& a) { return a.array().sin().matrix(); }
  static Matrix cos(const Matrix& a) { return a.array().cos().matrix(); }
  static Matrix softmax(const Matrix& a) { return kernel::softmax(a); }
};

struct GraphOps {
  using Value = Var;
  Tape& tape;

  Var in(std::int32_t i) const { return tape.var(i); }
  static Var add(const Var& a, const Var& b) { return ad::add(a, b); }
  static Var sub(const Var& a, const Var& b) { return ad::sub(a, b); }
  static Var mul(const Var& a, const Var& b) { return ad::mul(a, b); }
  static Var scale(const Var& a, double c) { return ad::scale(a, c); }
  static Var matmul(const Var& a, const Var& b, bool ta, bool tb) { return ad::matmul(a, b, ta, tb); }
  static Var sum_rows(const Var& a) { return ad::sum_rows(a); }
  static Var broadcast_rows(const Var& a, Index n) { return ad::broadcast_rows(a, n); }
  static Var row_sum(const Var& a) { return ad::row_sum(a); }
  static Var broadcast_cols(const Var& a, Index m) { return ad::broadcast_cols(a, m); }
  static Var relu_grad(const Var& g, const Var& x) { return ad::relu_grad(g, x); }
  static Var sign_mul(const Var& g, const Var& x) { return ad::sign_mul(g, x); }
  static Var sum(const Var& a) { return ad::sum(a); }
  static Var broadcast_scalar(const Var& s, Index r, Index c) { return ad::broadcast_scalar(s, r, c); }
  static Var sin(const Var& a) { return ad::sin(a); }
  static Var cos(const Var& a) { return ad::cos(a); }
  static Var softmax(const Var& a) { return ad::softmax(a); }
};

// Calls emit(input_index, contribution) for every input flagged in `need`.
template <class Ops, class Emit>
void vjp(Ops& ops, std::int32_t self, const Node& n, const typename Ops::Value& u,
         const std::vector<char>& need_of, std::int32_t lo, Emit&& emit) {
  auto need = [&](std::int32_t i) { return i >= lo && need_of[static_cast<std::size_t>(i - lo)] != 0; };
  const bool na = need(n.a);
  const bool nb = n.b >= 0 && need(n.b);

  switch (n.op) {
    case Op::Leaf:
    case Op::Constant:
      return;
    case Op::Add:
      if (na) emit(n.a, u);
      if (nb) emit(n.b, u);
      return;
    case Op::Sub:
      if (na) emit(n.a, u);
      if (nb) emit(n.b, Ops::scale(u, -1.0));
      return;
    case Op::Mul:
      if (na) emit(n.a, Ops::mul(u, ops.in(n.b)));
      if (nb) emit(n.b, Ops::mul(u, ops.in(n.a)));
      return;
    case Op::Scale:
      if (na) emit(n.a, Ops::scale(u, n.scalar));
      return;
    case Op::MatMul: {
      // C = op(A) op(B)
      if (na) {
        if (!n.transpose_a) {
          emit(n.a, Ops::matmul(u, ops.in(n.b), false, !n.transpose_b));
        } else {
          emit(n.a, Ops::matmul(ops.in(n.b), u, n.transpose_b, true));
        }
      }
      if (nb) {
        if (!n.transpose_b) {
          emit(n.b, Ops::matmul(ops.in(n.a), u, !n.transpose_a, false));
        } else {
          emit(n.b, Ops::matmul(u, ops.in(n.a), true, n.transpose_a));
        }
      }
      return;
    }
    case Op::AddBias:
      if (na) emit(n.a, u);
      if (nb) emit(n.b, Ops::sum_rows(u));
      return;
    case Op::SumRows:
      if (na) emit(n.a, Ops::broadcast_rows(u, ops.tape.node(n.a).value.rows()));
      return;
    case Op::BroadcastRows:
      if (na) emit(n.a, Ops::sum_rows(u));
      return;
    case Op::RowSum:
      if (na) emit(n.a, Ops::broadcast_cols(u, ops.tape.node(n.a).value.cols()));
      return;
    case Op::BroadcastCols:
      if (na) emit(n.a, Ops::row_sum(u));
      return;
    case Op::Relu:
      if (na) emit(n.a, Ops::relu_grad(u, ops.in(n.a)));
      return;
    case Op::ReluGrad:
      if (na) emit(n.a, Ops::relu_grad(u, ops.in(n.b)));
      return;
    case Op::Abs:
      if (na) emit(n.a, Ops::sign_mul(u, ops.in(n.a)));
      return;
    case Op::SignMul:
      if (na) emit(n.a, Ops::sign_mul(u, ops.in(n.b)));
      return;
    case Op::Square:
      if (na) emit(n.a, Ops::scale(Ops::mul(u, ops.in(n.a)), 2.0));
      return;
    case Op::Sum: {
      if (na) {
        const Matrix& x = ops.tape.node(n.a).value;
        emit(n.a, Ops::broadcast_scalar(u, x.rows(), x.cols()));
      }
      return;
    }
    case Op::BroadcastScalar:
      if (na) emit(n.a, Ops::sum(u));
      return;
    case Op::Sin:
      if (na) emit(n.a, Ops::mul(u, Ops::cos(ops.in(n.a))));
      return;
    case Op::Cos:
      if (na) emit(n.a, Ops::scale(Ops::mul(u, Ops::sin(ops.in(n.a))), -1.0));
      return;
    case Op::Softmax: {
      if (na) {
        // s * (u - rowsum(u * s))
        auto&& s = ops.in(self);
        const Index cols = n.value.cols();
        emit(n.a, Ops::mul(s, Ops::sub(u, Ops::broadcast_cols(Ops::row_sum(Ops::mul(u, s)), cols))));
      }
      return;
    }
    case Op::Mse: {
      const Matrix& p = ops.tape.node(n.a).value;
      const double k = 2.0 / static_cast<double>(p.size());
      if (na || nb) {
        auto diff = Ops::sub(ops.in(n.a), ops.in(n.b));
        auto gp = Ops::scale(Ops::mul(Ops::broadcast_scalar(u, p.rows(), p.cols()), diff), k);
        if (nb) emit(n.b, Ops::scale(gp, -1.0));
        if (na) emit(n.a, std::move(gp));
      }
      return;
    }
    case Op::SoftmaxXent: {
      if (na) {
        const Matrix& z = ops.tape.node(n.a).value;
        auto g = Ops::sub(Ops::softmax(ops.in(n.a)), ops.in(n.b));
        emit(n.a, Ops::scale(Ops::mul(Ops::broadcast_scalar(u, z.rows(), z.cols()), g),
                             1.0 / static_cast<double>(z.rows())));
      }
      return;
    }
    case Op::AddN:
      if (na) emit(n.a, u);
      if (nb) emit(n.b, u);
      for (std::int32_t m : n.more) {
        if (need(m)) emit(m, u);
      }
      return;
  }
}

struct Sweep {
  std::int32_t lo = 0;
  std::int32_t hi = -1;
  std::vector<char> relevant;  // indexed by node - lo
};

Sweep plan(const Tape& tape, const Var& y, std::span<const Var> wrt) {
  if (!y.valid()) throw UsageError("grad: unbound output");
  if (y.rows() != 1 || y.cols() != 1) throw UsageError("grad: output must be a 1 x 1 scalar");
  Sweep s;
  s.hi = y.index();
  s.lo = s.hi;
  for (const Var& w : wrt) {
    if (!w.valid() || w.tape() != &tape) {
      throw UsageError("grad: parameter is not registered on the output's tape");
    }
    s.lo = std::min(s.lo, w.index());
  }
  s.relevant.assign(static_cast<std::size_t>(s.hi - s.lo + 1), 0);
  for (const Var& w : wrt) {
    if (w.index() <= s.hi) s.relevant[static_cast<std::size_t>(w.index() - s.lo)] = 1;
  }
  auto rel = [&](std::int32_t i) {
    return i >= s.lo && s.relevant[static_cast<std::size_t>(i - s.lo)] != 0;
  };
  for (std::int32_t i = s.lo; i <= s.hi; ++i) {
    char& r = s.relevant[static_cast<std::size_t>(i - s.lo)];
    if (r) continue;
    const Node& n = tape.node(i);
    if (!n.needs_grad) continue;
    bool any = (n.a >= 0 && rel(n.a)) || (n.b >= 0 && rel(n.b));
    for (std::int32_t m : n.more) any = any || rel(m);
    r = any ? 1 : 0;
  }
  return s;
}

}  // namespace

std::vector<Matrix> grad_values(const Var& y, std::span<const Var> wrt) {
  const Tape& tape = tape_of(y);
  Sweep s = plan(tape, y, wrt);
  const std::size_t span_len = s.relevant.size();
  std::vector<Matrix> acc(span_len);
  std::vector<char> has(span_len, 0);
  std::vector<char> keep(span_len, 0);
  for (const Var& w : wrt) {
    if (w.index() <= s.hi) keep[static_cast<std::size_t>(w.index() - s.lo)] = 1;
  }

  NumericOps ops{tape};
  auto slot = [&](std::int32_t i) { return static_cast<std::size_t>(i - s.lo); };
  if (s.relevant[slot(s.hi)]) {
    acc[slot(s.hi)] = kernel::scalar(1.0);
    has[slot(s.hi)] = 1;
  }
  for (std::int32_t i = s.hi; i >= s.lo; --i) {
    const std::size_t k = slot(i);
    if (!has[k]) continue;
    const Node& n = tape.node(i);
    vjp(ops, i, n, acc[k], s.relevant, s.lo, [&](std::int32_t target, Matrix contribution) {
      const std::size_t t = slot(target);
      if (has[t]) {
        acc[t] += contribution;
      } else {
        acc[t] = std::move(contribution);
        has[t] = 1;
      }
    });
    if (!keep[k]) acc[k] = Matrix();
  }

  std::vector<Matrix> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const std::size_t k = w.index() <= s.hi ? slot(w.index()) : span_len;
    if (k < span_len && has[k]) {
      require_finite(acc[k], "gradient");
      out.push_back(acc[k]);
    } else {
      out.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
  }
  return out;
}

std::vector<Var> grad(const Var& y, std::span<const Var> wrt) {
  Tape& tape = tape_of(y);
  Sweep s = plan(tape, y, wrt);
  const std::size_t span_len = s.relevant.size();
  std::vector<std::vector<Var>> parts(span_len);

  GraphOps ops{tape};
  auto slot = [&](std::int32_t i) { return static_cast<std::size_t>(i - s.lo); };
  auto collapse = [&](std::size_t k) -> Var {
    std::vector<Var>& p = parts[k];
    if (p.size() > 1) {
      Var total = add_n(p);
      p.assign(1, total);
    }
    return p.front();
  };

  if (s.relevant[slot(s.hi)]) parts[slot(s.hi)].push_back(tape.constant(1.0));
  for (std::int32_t i = s.hi; i >= s.lo; --i) {
    const std::size_t k = slot(i);
    if (parts[k].empty()) continue;
    const Var u = collapse(k);
    // std::deque keeps element references valid while the rule appends nodes.
    const Node& n = tape.node(i);
    vjp(ops, i, n, u, s.relevant, s.lo, [&](std::int32_t target, Var contribution) {
      parts[slot(target)].push_back(contribution);
    });
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const std::size_t k = w.index() <= s.hi ? slot(w.index()) : span_len;
    if (k < span_len && !parts[k].empty()) {
      out.push_back(collapse(k));
    } else {
      out.push_back(tape.constant(Matrix::Zero(w.rows(), w.cols())));
    }
  }
  return out;
}

GradientVector finite_diff_grad(const std::function<double(const Vector&)>& objective,
                                const Vector& params, double eps) {
  if (!(eps > 0.0)) throw UsageError("finite_diff_grad: eps must be positive");
  GradientVector g(params.size());
  Vector probe = params;
  for (Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + eps;
    const double up = objective(probe);
    probe[i] = params[i] - eps;
    const double down = objective(probe);
    probe[i] = params[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: objective is not finite at coordinate " +
                         std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

}  // namespace kcciol::ad
