#pragma once

// Finite-difference kernels and small dense linear algebra shared by every
// geometry module. All functions are pure.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "confgeom/errors.hpp"
#include "confgeom/tensor.hpp"

namespace confgeom {

using ScalarField = std::function<double(const Vector&)>;
using VectorField = std::function<Vector(const Vector&)>;
using MatrixField = std::function<Matrix(const Vector&)>;
using TensorValuedField = std::function<TensorField(const Vector&)>;

namespace detail {

inline double round_to_power_of_two(double h) { return std::exp2(std::round(std::log2(h))); }

inline double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw EvaluationDomainError(std::string("non-finite value from ") + what);
  return v;
}

inline Vector shifted(const Vector& x, Eigen::Index i, double h) {
  Vector y = x;
  y(i) += h;
  return y;
}

inline Vector shifted(const Vector& x, Eigen::Index i, double hi, Eigen::Index j, double hj) {
  Vector y = x;
  y(i) += hi;
  y(j) += hj;
  return y;
}

}  // namespace detail

/// Default central-difference step for a derivative of the given order at
/// coordinate value `xi`. Steps are rounded to a power of two so that x +/- h
/// is exact in binary arithmetic.
inline double default_step(int order, double xi) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double base = 0.0;
  switch (order) {
    case 1: base = std::cbrt(eps); break;
    case 2: base = std::pow(eps, 0.25); break;
    default: base = std::pow(eps, 0.2); break;
  }
  return detail::round_to_power_of_two(base * std::max(1.0, std::abs(xi)));
}

inline double step_for(int order, double xi, std::optional<double> step) {
  if (step) {
    if (!(*step > 0.0)) throw ParameterError("finite-difference step must be positive");
    return *step * std::max(1.0, std::abs(xi));
  }
  return default_step(order, xi);
}

/// Jacobian of a vector field: rows are outputs, columns are inputs.
inline Matrix jacobian(const VectorField& f, const Vector& x, std::optional<double> step = {}) {
  const Eigen::Index d = x.size();
  Matrix jac;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double h = step_for(1, x(i), step);
    const Vector fp = f(detail::shifted(x, i, h));
    const Vector fm = f(detail::shifted(x, i, -h));
    if (!fp.allFinite() || !fm.allFinite())
      throw EvaluationDomainError("non-finite value on jacobian stencil");
    if (i == 0) jac.resize(fp.size(), d);
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

/// Derivative of a tensor-valued field. The result carries a new leading
/// covariant slot: out(k, ...) = d/dx^k F(...).
inline TensorField derivative(const TensorValuedField& f, const Vector& x,
                              std::optional<double> step = {}) {
  const auto d = static_cast<std::size_t>(x.size());
  std::optional<TensorField> out;
  for (std::size_t k = 0; k < d; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double h = step_for(1, x(kk), step);
    const TensorField fp = f(detail::shifted(x, kk, h));
    const TensorField fm = f(detail::shifted(x, kk, -h));
    if (!fp.all_finite() || !fm.all_finite())
      throw EvaluationDomainError("non-finite value on derivative stencil");
    if (!out) {
      std::vector<std::size_t> dims{d};
      std::vector<Variance> var{Variance::Covariant};
      dims.insert(dims.end(), fp.dims().begin(), fp.dims().end());
      var.insert(var.end(), fp.variances().begin(), fp.variances().end());
      out.emplace(dims, var);
    }
    const std::size_t block = fp.size();
    for (std::size_t e = 0; e < block; ++e)
      out->values()[k * block + e] = (fp.values()[e] - fm.values()[e]) / (2.0 * h);
  }
  return *out;
}

/// Central-difference derivative tensor of order 1, 2 or 3 of a scalar field.
/// Orders 2 and 3 are exactly symmetric under slot permutation.
inline TensorField differentiate(const ScalarField& f, const Point& x, int order,
                                 std::optional<double> step = {}) {
  const Vector& p = x.coords;
  const auto d = static_cast<std::size_t>(p.size());
  auto eval = [&](const Vector& y) { return detail::checked(f(y), "scalar field"); };

  if (order == 1) {
    TensorField g = TensorField::covariant(1, d);
    for (std::size_t i = 0; i < d; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double h = step_for(1, p(ii), step);
      g(i) = (eval(detail::shifted(p, ii, h)) - eval(detail::shifted(p, ii, -h))) / (2.0 * h);
    }
    return g;
  }

  if (order == 2) {
    TensorField hess = TensorField::covariant(2, d);
    const double f0 = eval(p);
    for (std::size_t i = 0; i < d; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double hi = step_for(2, p(ii), step);
      hess(i, i) = (eval(detail::shifted(p, ii, hi)) - 2.0 * f0 + eval(detail::shifted(p, ii, -hi))) /
                   (hi * hi);
      for (std::size_t j = i + 1; j < d; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double hj = step_for(2, p(jj), step);
        const double v = (eval(detail::shifted(p, ii, hi, jj, hj)) - eval(detail::shifted(p, ii, hi, jj, -hj)) -
                          eval(detail::shifted(p, ii, -hi, jj, hj)) + eval(detail::shifted(p, ii, -hi, jj, -hj))) /
                         (4.0 * hi * hj);
        hess(i, j) = v;
        hess(j, i) = v;
      }
    }
    return hess;
  }

  if (order == 3) {
    // Differentiate the numerical Hessian once, then symmetrize.
    auto hess_field = [&](const Vector& y) { return differentiate(f, Point(y, x.chart), 2, step); };
    TensorField t = TensorField::covariant(3, d);
    for (std::size_t k = 0; k < d; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double h = step.has_value() ? step.value() * std::max(1.0, std::abs(p(kk))) : default_step(3, p(kk));
      const TensorField hp = hess_field(detail::shifted(p, kk, h));
      const TensorField hm = hess_field(detail::shifted(p, kk, -h));
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) t(k, i, j) = (hp(i, j) - hm(i, j)) / (2.0 * h);
    }
    return t.symmetrized();
  }

  throw ParameterError("differentiate supports orders 1, 2 and 3");
}

struct InvertOptions {
  double condition_cap = 1e10;
  double pivot_tolerance = 1e-12;
};

/// Inverse of a symmetric matrix via LDLT. Fails loudly when the matrix is
/// numerically singular or its condition number exceeds the cap.
inline Matrix invert(const Matrix& a, const InvertOptions& opt = {}) {
  if (a.rows() != a.cols()) throw UnsupportedShapeError("invert needs a square matrix");
  if (!a.allFinite()) throw EvaluationDomainError("invert: non-finite entries");
  const double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) throw SingularMetricError("invert: zero matrix");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw UnsupportedShapeError("invert expects a symmetric matrix");
  const Matrix sym = 0.5 * (a + a.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  const Vector ev = eig.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (lo == 0.0 || hi / lo > opt.condition_cap)
    throw SingularMetricError("invert: condition number " + std::to_string(lo == 0.0 ? INFINITY : hi / lo) +
                              " exceeds cap");

  Eigen::LDLT<Matrix> ldlt(sym);
  const Vector piv = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || piv.minCoeff() <= opt.pivot_tolerance * piv.maxCoeff()) {
    // Indefinite matrices can defeat LDLT pivoting; fall back to the eigenbasis.
    Eigen::SelfAdjointEigenSolver<Matrix> full(sym);
    return full.eigenvectors() * full.eigenvalues().cwiseInverse().asDiagonal() *
           full.eigenvectors().transpose();
  }
  Matrix inv = ldlt.solve(Matrix::Identity(a.rows(), a.cols()));
  return 0.5 * (inv + inv.transpose());
}

inline TensorField invert(const TensorField& a, const InvertOptions& opt = {}) {
  if (a.order() != 2) throw UnsupportedShapeError("invert needs an order-2 tensor");
  auto flip = [](Variance v) {
    return v == Variance::Covariant ? Variance::Contravariant : Variance::Covariant;
  };
  return TensorField::from_matrix(invert(a.to_matrix(), opt), flip(a.variance(0)), flip(a.variance(1)));
}

struct NewtonOptions {
  int max_iterations = 100;
  std::optional<double> step;
};

/// Solves F(x) = target by damped Newton iteration starting at `guess`.
/// `jac` may supply the analytic Jacobian of F; otherwise it is differenced.
inline Point newton_solve(const VectorField& f, const Point& target, const Point& guess, double tol,
                          const MatrixField& jac = {}, const NewtonOptions& opt = {}) {
  if (!(tol > 0.0)) throw ParameterError("newton_solve: tolerance must be positive");
  auto residual_of = [&](const Vector& x, Vector& r) {
    try {
      r = f(x) - target.coords;
    } catch (const EvaluationDomainError&) {
      return false;
    }
    return r.allFinite();
  };

  Vector x = guess.coords;
  Vector r;
  if (!residual_of(x, r)) throw EvaluationDomainError("newton_solve: initial guess outside domain");
  for (int it = 0; it < opt.max_iterations; ++it) {
    double norm = r.lpNorm<Eigen::Infinity>();
    if (norm <= tol) return Point(x, guess.chart);
    const Matrix j = jac ? jac(x) : jacobian(f, x, opt.step);
    const Vector dx = j.fullPivLu().solve(r);
    if (!dx.allFinite()) break;
    double lambda = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt, lambda *= 0.5) {
      const Vector trial = x - lambda * dx;
      Vector rt;
      if (residual_of(trial, rt) && rt.lpNorm<Eigen::Infinity>() < norm) {
        x = trial;
        r = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (r.lpNorm<Eigen::Infinity>() <= tol) return Point(x, guess.chart);
  throw NoConvergenceError("newton_solve: no convergence, residual " +
                           std::to_string(r.lpNorm<Eigen::Infinity>()));
}

}  // namespace confgeom
