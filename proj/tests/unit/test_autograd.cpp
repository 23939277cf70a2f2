#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "kcciol/autograd.hpp"
#include "kcciol/errors.hpp"
#include "oracles.hpp"

using namespace kcciol;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using ad::Vector;

namespace {

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }

double grad1(const Var& y, const Var& x) { return ad::grad_values(y, std::span(&x, 1))[0](0, 0); }

}  // namespace

TEST(Grad, SquareAtThree) {
  Tape t;
  Var w = t.variable(m1(3.0));
  EXPECT_DOUBLE_EQ(grad1(ad::sum(ad::square(w)), w), 6.0);
}

TEST(Grad, L1OfMixedSigns) {
  Tape t;
  Var w = t.variable((Matrix(1, 2) << 1.0, -2.0).finished());
  const Matrix g = ad::grad_values(ad::sum(ad::abs(w)), std::span(&w, 1))[0];
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(0, 1), -1.0);
}

TEST(Grad, AbsSubgradientAtZeroIsZero) {
  Tape t;
  Var w = t.variable(m1(0.0));
  EXPECT_EQ(grad1(ad::sum(ad::abs(w)), w), 0.0);
}

TEST(Grad, NormOfGradientOfCubeIsDoubleBackward) {
  // f = w^3, g = (df/dw)^2 = 9 w^4, dg/dw = 36 w^3 = 36 at w = 1.
  Tape t;
  Var w = t.variable(m1(1.0));
  Var f = ad::mul(ad::mul(w, w), w);
  Var df = ad::grad(ad::sum(f), std::span(&w, 1))[0];
  Var g = ad::sum(ad::square(df));
  EXPECT_NEAR(g.scalar(), 9.0, 1e-12);
  EXPECT_NEAR(grad1(g, w), 36.0, 1e-10);
}

TEST(Grad, SecondDerivativeOfPolynomialIsExact) {
  // p(w) = 2 w^4 - 3 w^2 + w, p'' = 24 w^2 - 6
  for (double x : {-1.5, -0.3, 0.0, 0.7, 2.0}) {
    Tape t;
    Var w = t.variable(m1(x));
    Var w2 = ad::mul(w, w);
    Var p = ad::sum(ad::add(ad::sub(ad::scale(ad::mul(w2, w2), 2.0), ad::scale(w2, 3.0)), w));
    Var dp = ad::grad(p, std::span(&w, 1))[0];
    EXPECT_NEAR(grad1(ad::sum(dp), w), 24.0 * x * x - 6.0, 1e-10) << "w=" << x;
  }
}

TEST(Grad, ThirdOrderNesting) {
  // f = sin(w): third derivative is -cos(w).
  Tape t;
  const double x = 0.4;
  Var w = t.variable(m1(x));
  Var d1 = ad::grad(ad::sum(ad::sin(w)), std::span(&w, 1))[0];
  Var d2 = ad::grad(ad::sum(d1), std::span(&w, 1))[0];
  Var d3 = ad::grad(ad::sum(d2), std::span(&w, 1))[0];
  EXPECT_NEAR(d3.scalar(), -std::cos(x), 1e-12);
  // and one more level on top
  EXPECT_NEAR(grad1(ad::sum(d3), w), std::sin(x), 1e-12);
}

TEST(Grad, UnregisteredParameterIsUsageError) {
  Tape a;
  Tape b;
  Var w = a.variable(m1(1.0));
  Var other = b.variable(m1(1.0));
  Var y = ad::sum(ad::square(w));
  EXPECT_THROW(ad::grad_values(y, std::span(&other, 1)), UsageError);
  EXPECT_THROW(ad::grad(y, std::span(&other, 1)), UsageError);
}

TEST(Grad, NonScalarOutputIsUsageError) {
  Tape t;
  Var w = t.variable(Matrix::Ones(2, 2));
  EXPECT_THROW(ad::grad_values(ad::square(w), std::span(&w, 1)), UsageError);
}

TEST(Grad, NonFiniteNodeIsNumericErrorNamingNode) {
  Tape t;
  Var w = t.variable(m1(1e200));
  try {
    ad::square(w);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("square"), std::string::npos) << e.what();
  }
}

TEST(Grad, UnreachableParameterGetsZeros) {
  Tape t;
  Var w = t.variable(Matrix::Ones(2, 3));
  Var v = t.variable(m1(2.0));
  const auto g = ad::grad_values(ad::sum(ad::square(v)), std::span(&w, 1));
  EXPECT_EQ(g[0], Matrix::Zero(2, 3));
}

// --- finite_diff_grad ---------------------------------------------------------

TEST(FiniteDiff, QuadraticIsExact) {
  const auto f = [](const Vector& v) { return v[0] * v[0]; };
  EXPECT_NEAR(ad::finite_diff_grad(f, Vector::Constant(1, 3.0), 1e-5)[0], 6.0, 1e-8);
}

TEST(FiniteDiff, ConstantIsZero) {
  const auto f = [](const Vector&) { return 4.2; };
  EXPECT_EQ(ad::finite_diff_grad(f, Vector::Ones(5), 1e-5), Vector::Zero(5));
}

TEST(FiniteDiff, SineMatchesCosine) {
  const auto f = [](const Vector& v) { return std::sin(v[0]); };
  EXPECT_NEAR(ad::finite_diff_grad(f, Vector::Constant(1, 0.7), 1e-5)[0], std::cos(0.7), 1e-8);
}

TEST(FiniteDiff, RejectsNonPositiveEps) {
  const auto f = [](const Vector&) { return 0.0; };
  EXPECT_THROW(ad::finite_diff_grad(f, Vector::Ones(1), 0.0), UsageError);
}

TEST(FiniteDiff, NonFiniteEvaluationIsNumericError) {
  const auto f = [](const Vector&) { return std::numeric_limits<double>::infinity(); };
  EXPECT_THROW(ad::finite_diff_grad(f, Vector::Ones(1), 1e-5), NumericError);
}

// --- primitives against central differences ------------------------------------

namespace {

using Builder = std::function<Var(Tape&, const Var&)>;

struct Primitive {
  const char* name;
  Builder build;
  bool positive_input = false;
};

// Every primitive reduced to a scalar through a fixed random projection.
std::vector<Primitive> primitives() {
  auto proj = [](Tape& t, const Var& v) {
    std::mt19937_64 r(99);
    std::normal_distribution<double> n;
    Matrix p(v.rows(), v.cols());
    for (ad::Index i = 0; i < p.size(); ++i) p.data()[i] = n(r);
    return ad::sum(ad::mul(v, t.constant(p)));
  };
  auto c = [](Tape& t, ad::Index r, ad::Index k, double s) {
    Matrix m(r, k);
    for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = std::sin(1.3 * static_cast<double>(i) + s);
    return t.constant(m);
  };
  std::vector<Primitive> out;
  out.push_back({"add", [=](Tape& t, const Var& x) { return proj(t, ad::add(x, ad::square(x))); }});
  out.push_back({"sub", [=](Tape& t, const Var& x) { return proj(t, ad::sub(c(t, 3, 4, 0.1), ad::square(x))); }});
  out.push_back({"mul", [=](Tape& t, const Var& x) { return proj(t, ad::mul(x, ad::sin(x))); }});
  out.push_back({"scale", [=](Tape& t, const Var& x) { return proj(t, ad::scale(ad::square(x), -1.7)); }});
  out.push_back({"matmul", [=](Tape& t, const Var& x) { return proj(t, ad::matmul(x, c(t, 4, 2, 0.3))); }});
  out.push_back({"matmul_ta", [=](Tape& t, const Var& x) { return proj(t, ad::matmul(x, c(t, 3, 5, 0.2), true)); }});
  out.push_back({"matmul_tb", [=](Tape& t, const Var& x) {
                   return proj(t, ad::matmul(c(t, 2, 4, 0.4), ad::square(x), false, true));
                 }});
  out.push_back({"matmul_self", [=](Tape& t, const Var& x) { return proj(t, ad::matmul(x, x, false, true)); }});
  out.push_back({"add_bias", [=](Tape& t, const Var& x) {
                   return proj(t, ad::add_bias(c(t, 3, 4, 0.5), ad::sum_rows(ad::square(x))));
                 }});
  out.push_back({"sum_rows", [=](Tape& t, const Var& x) { return proj(t, ad::sum_rows(ad::mul(x, x))); }});
  out.push_back({"broadcast_rows", [=](Tape& t, const Var& x) { return proj(t, ad::broadcast_rows(ad::sum_rows(x), 5)); }});
  out.push_back({"row_sum", [=](Tape& t, const Var& x) { return proj(t, ad::row_sum(ad::sin(x))); }});
  out.push_back({"broadcast_cols", [=](Tape& t, const Var& x) { return proj(t, ad::broadcast_cols(ad::row_sum(x), 3)); }});
  out.push_back({"relu", [=](Tape& t, const Var& x) { return proj(t, ad::relu(x)); }});
  out.push_back({"abs", [=](Tape& t, const Var& x) { return proj(t, ad::abs(x)); }});
  out.push_back({"square", [=](Tape& t, const Var& x) { return proj(t, ad::square(x)); }});
  out.push_back({"sum", [=](Tape& t, const Var& x) { return ad::sum(ad::square(x)); }});
  out.push_back({"broadcast_scalar", [=](Tape& t, const Var& x) { return proj(t, ad::broadcast_scalar(ad::sum(x), 2, 2)); }});
  out.push_back({"sin", [=](Tape& t, const Var& x) { return proj(t, ad::sin(x)); }});
  out.push_back({"cos", [=](Tape& t, const Var& x) { return proj(t, ad::cos(x)); }});
  out.push_back({"softmax", [=](Tape& t, const Var& x) { return proj(t, ad::softmax(x)); }});
  out.push_back({"mse", [=](Tape& t, const Var& x) { return ad::mse(ad::sin(x), c(t, 3, 4, 0.7)); }});
  out.push_back({"softmax_xent", [=](Tape& t, const Var& x) {
                   Matrix target = Matrix::Zero(3, 4);
                   target(0, 1) = target(1, 3) = target(2, 0) = 1.0;
                   return ad::softmax_cross_entropy(x, t.constant(target));
                 }});
  out.push_back({"add_n", [=](Tape& t, const Var& x) {
                   std::vector<Var> terms{ad::square(x), ad::sin(x), x};
                   return proj(t, ad::add_n(terms));
                 }});
  return out;
}

double eval_primitive(const Primitive& p, const Vector& v) {
  Tape t;
  Var x = t.variable(Eigen::Map<const Matrix>(v.data(), 3, 4));
  return p.build(t, x).scalar();
}

Vector analytic(const Builder& build, const Vector& v, int depth) {
  // depth 1: d/dx of f; depth 2: d/dx of sum(d f/dx * r); depth 3: one more level.
  Tape t;
  Var x = t.variable(Eigen::Map<const Matrix>(v.data(), 3, 4));
  Var y = build(t, x);
  Matrix r = Matrix::Constant(3, 4, 0.5);
  for (int d = 1; d < depth; ++d) {
    Var g = ad::grad(y, std::span(&x, 1))[0];
    y = ad::sum(ad::mul(ad::sin(g), t.constant(r)));
  }
  const Matrix g = ad::grad_values(y, std::span(&x, 1))[0];
  return Eigen::Map<const Vector>(g.data(), g.size());
}

double nested_value(const Builder& build, const Vector& v, int depth) {
  Tape t;
  Var x = t.variable(Eigen::Map<const Matrix>(v.data(), 3, 4));
  Var y = build(t, x);
  Matrix r = Matrix::Constant(3, 4, 0.5);
  for (int d = 1; d < depth; ++d) {
    Var g = ad::grad(y, std::span(&x, 1))[0];
    y = ad::sum(ad::mul(ad::sin(g), t.constant(r)));
  }
  return y.scalar();
}

// Keeps every coordinate at least `margin` from zero so |x| and relu are smooth
// inside the stencil.
Vector draw(std::mt19937_64& rng, double margin) {
  std::uniform_real_distribution<double> u(margin, 1.5);
  std::bernoulli_distribution s(0.5);
  Vector v(12);
  for (ad::Index i = 0; i < v.size(); ++i) v[i] = s(rng) ? u(rng) : -u(rng);
  return v;
}

}  // namespace

class PrimitiveGrad : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGrad, MatchesCentralDifferencesOnRandomInstances) {
  const int depth = GetParam();
  std::mt19937_64 rng(1234 + depth);
  double worst = 0.0;
  std::string worst_name;
  for (const Primitive& p : primitives()) {
    for (int trial = 0; trial < 100; ++trial) {
      const Vector v = draw(rng, 1e-3);
      const auto f = [&](const Vector& x) { return nested_value(p.build, x, depth); };
      const double e = oracle::max_rel_err(analytic(p.build, v, depth), oracle::central_diff4(f, v, 1e-4));
      if (e > worst) {
        worst = e;
        worst_name = p.name;
      }
    }
  }
  EXPECT_LE(worst, 1e-4) << "worst primitive: " << worst_name;
}

INSTANTIATE_TEST_SUITE_P(NestingDepth, PrimitiveGrad, ::testing::Values(1, 2, 3));

TEST(Tape, ReplayIsBitIdentical) {
  auto run = [] {
    Tape t;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    Matrix a(6, 5);
    for (ad::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
    Var x = t.variable(a);
    Var w = t.variable(a.transpose() * 0.3);
    Var y = ad::sum(ad::softmax(ad::relu(ad::matmul(x, w))));
    Var g = ad::grad(y, std::span(&w, 1))[0];
    return std::pair(y.scalar(), Matrix(g.value()));
  };
  const auto first = run();
  const auto second = run();
  EXPECT_EQ(first.first, second.first);
  EXPECT_EQ(first.second, second.second);
}

TEST(Tape, NodesAreTopologicallyOrdered) {
  Tape t;
  Var x = t.variable(Matrix::Ones(2, 2));
  Var y = ad::sum(ad::square(ad::relu(x)));
  ad::grad(y, std::span(&x, 1));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const ad::Node& n = t.node(static_cast<std::int32_t>(i));
    EXPECT_LT(n.a, static_cast<std::int32_t>(i));
    EXPECT_LT(n.b, static_cast<std::int32_t>(i));
    for (std::int32_t m : n.more) EXPECT_LT(m, static_cast<std::int32_t>(i));
  }
}
