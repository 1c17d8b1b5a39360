#include <cmath>

#include <gtest/gtest.h>

#include "confgeom/tensorops.hpp"

using namespace confgeom;

namespace {

double cubic(const Vector& x) {
  return x(0) * x(0) * x(0) + 2.0 * x(0) * x(1) * x(1) - std::sin(x(1)) + std::exp(0.5 * x(0));
}

}  // namespace

TEST(Tensor, ShapeAndVariance) {
  TensorField t({2, 3}, {Variance::Covariant, Variance::Contravariant});
  EXPECT_EQ(t.order(), 2u);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.variance(1), Variance::Contravariant);
  EXPECT_THROW(TensorField({2, 2}, {Variance::Covariant}), UnsupportedShapeError);
  EXPECT_THROW(TensorField::covariant(5, 2), UnsupportedShapeError);
}

TEST(Tensor, PermuteMovesSlots) {
  TensorField t = TensorField::covariant(3, 2);
  t(0, 1, 1) = 7.0;
  const TensorField p = t.permuted({2, 0, 1});
  // slot s of the result is slot perm[s] of the source
  EXPECT_DOUBLE_EQ(p(1, 0, 1), 7.0);
  EXPECT_DOUBLE_EQ(p.max_abs(), 7.0);
}

TEST(Tensor, SymmetrizeAveragesPermutations) {
  TensorField t = TensorField::covariant(2, 2);
  t(0, 1) = 4.0;
  const TensorField s = t.symmetrized();
  EXPECT_DOUBLE_EQ(s(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(s(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(s(0, 0), 0.0);
}

TEST(Tensor, ContractMatchesMatrixProduct) {
  Matrix a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  Matrix b(3, 2);
  b << 1, -1, 0, 2, 3, 1;
  const TensorField ta = TensorField::from_matrix(a, Variance::Covariant, Variance::Covariant);
  const TensorField tb = TensorField::from_matrix(b, Variance::Contravariant, Variance::Covariant);
  const Matrix c = ta.contract(tb, 1, 0).to_matrix();
  EXPECT_LT((c - a * b).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(ta.contract(ta, 1, 0), UnsupportedShapeError);
}

TEST(Tensor, ArithmeticChecksShape) {
  const TensorField a = TensorField::covariant(2, 2);
  const TensorField b = TensorField::covariant(2, 3);
  EXPECT_THROW(a + b, UnsupportedShapeError);
  EXPECT_THROW(max_abs_diff(a, b), UnsupportedShapeError);
}

TEST(Tensor, PointRejectsNonFinite) {
  EXPECT_THROW(Point(make_vector({1.0, NAN}), Chart::U), EvaluationDomainError);
}

TEST(Tensorops, DefaultStepIsPowerOfTwo) {
  for (int order = 1; order <= 3; ++order) {
    const double h = default_step(order, 3.7);
    EXPECT_DOUBLE_EQ(std::exp2(std::round(std::log2(h))), h);
  }
  EXPECT_LT(default_step(1, 0.0), default_step(2, 0.0));
}

TEST(Tensorops, JacobianOfLinearMapIsExact) {
  Matrix a(3, 2);
  a << 1, 2, -3, 0.5, 4, 7;
  const VectorField f = [&a](const Vector& x) { return Vector(a * x); };
  const Matrix j = jacobian(f, make_vector({0.3, -1.2}));
  EXPECT_LT((j - a).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Tensorops, DifferentiateAgainstAnalytic) {
  const Point x(make_vector({0.4, -0.7}), Chart::Theta);
  const double x0 = 0.4, x1 = -0.7;

  const TensorField g = differentiate(cubic, x, 1);
  EXPECT_NEAR(g(0), 3 * x0 * x0 + 2 * x1 * x1 + 0.5 * std::exp(0.5 * x0), 1e-9);
  EXPECT_NEAR(g(1), 4 * x0 * x1 - std::cos(x1), 1e-9);

  const TensorField h = differentiate(cubic, x, 2);
  EXPECT_NEAR(h(0, 0), 6 * x0 + 0.25 * std::exp(0.5 * x0), 1e-6);
  EXPECT_NEAR(h(0, 1), 4 * x1, 1e-6);
  EXPECT_NEAR(h(1, 1), 4 * x0 + std::sin(x1), 1e-6);
  EXPECT_DOUBLE_EQ(h(0, 1), h(1, 0));

  const TensorField t = differentiate(cubic, x, 3);
  EXPECT_NEAR(t(0, 0, 0), 6 + 0.125 * std::exp(0.5 * x0), 1e-4);
  EXPECT_NEAR(t(0, 1, 1), 4.0, 1e-4);
  EXPECT_NEAR(t(1, 1, 1), std::cos(x1), 1e-4);
  EXPECT_NEAR(t(0, 0, 1), 0.0, 1e-4);
  EXPECT_DOUBLE_EQ(t(0, 1, 1), t(1, 0, 1));
  EXPECT_DOUBLE_EQ(t(0, 1, 1), t(1, 1, 0));

  EXPECT_THROW(differentiate(cubic, x, 4), ParameterError);
  EXPECT_THROW(differentiate(cubic, x, 1, -1.0), ParameterError);
}

TEST(Tensorops, DifferentiateFlagsDomainErrors) {
  const ScalarField f = [](const Vector& x) { return std::log(x(0)); };
  EXPECT_THROW(differentiate(f, Point(make_vector({0.0}), Chart::Theta), 1), EvaluationDomainError);
}

TEST(Tensorops, DerivativeAddsLeadingSlot) {
  const TensorValuedField f = [](const Vector& x) {
    TensorField t = TensorField::covariant(2, 2);
    t(0, 1) = x(0) * x(1);
    t(1, 1) = x(1) * x(1);
    return t;
  };
  const TensorField d = derivative(f, make_vector({2.0, 3.0}));
  ASSERT_EQ(d.order(), 3u);
  EXPECT_NEAR(d(0, 0, 1), 3.0, 1e-9);
  EXPECT_NEAR(d(1, 0, 1), 2.0, 1e-9);
  EXPECT_NEAR(d(1, 1, 1), 6.0, 1e-9);
  EXPECT_NEAR(d(0, 1, 1), 0.0, 1e-9);
}

TEST(Tensorops, InvertSymmetric) {
  Matrix a(3, 3);
  a << 4, 1, 0.5, 1, 3, 0.2, 0.5, 0.2, 2;
  const Matrix inv = invert(a);
  EXPECT_LT((inv * a - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-14);

  const TensorField t = invert(TensorField::from_matrix(a));
  EXPECT_EQ(t.variance(0), Variance::Contravariant);
  EXPECT_EQ(t.variance(1), Variance::Contravariant);
}

TEST(Tensorops, InvertIndefinite) {
  Matrix a(2, 2);
  a << 1, 0, 0, -2;
  const Matrix inv = invert(a);
  EXPECT_NEAR(inv(1, 1), -0.5, 1e-15);
}

TEST(Tensorops, InvertFailsLoudly) {
  Matrix s(2, 2);
  s << 1, 1, 1, 1;
  EXPECT_THROW(invert(s), SingularMetricError);
  Matrix c(2, 2);
  c << 1, 0, 0, 1e-11;
  EXPECT_THROW(invert(c), SingularMetricError);
  EXPECT_NO_THROW(invert(c, InvertOptions{1e12, 1e-14}));
  Matrix ns(2, 2);
  ns << 1, 2, 0, 1;
  EXPECT_THROW(invert(ns), UnsupportedShapeError);
  EXPECT_THROW(invert(Matrix::Zero(2, 2)), SingularMetricError);
}

TEST(Tensorops, NewtonSolvesSmoothSystem) {
  const VectorField f = [](const Vector& x) {
    return make_vector({x(0) * x(0) + x(1), std::exp(x(1)) - x(0)});
  };
  const Point target(make_vector({3.0, std::exp(2.0) - 1.0}), Chart::Theta);
  const Point sol = newton_solve(f, target, Point(make_vector({0.5, 0.5}), Chart::Theta), 1e-13);
  EXPECT_NEAR(sol.coords(0), 1.0, 1e-12);
  EXPECT_NEAR(sol.coords(1), 2.0, 1e-12);
  EXPECT_EQ(sol.chart, Chart::Theta);
}

TEST(Tensorops, NewtonReportsFailure) {
  const VectorField f = [](const Vector& x) { return make_vector({x(0) * x(0) + 1.0}); };
  const Point target(make_vector({0.0}), Chart::Theta);
  EXPECT_THROW(newton_solve(f, target, Point(make_vector({1.0}), Chart::Theta), 1e-12), NoConvergenceError);
  EXPECT_THROW(newton_solve(f, target, Point(make_vector({1.0}), Chart::Theta), 0.0), ParameterError);
}
