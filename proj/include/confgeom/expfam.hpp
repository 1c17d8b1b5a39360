#pragma once

// Full exponential families: potential, dual coordinates, Fisher metric,
// skewness, alpha-connections and Riemann-Christoffel curvature.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "confgeom/errors.hpp"
#include "confgeom/tensor.hpp"
#include "confgeom/tensorops.hpp"

namespace confgeom {

struct ExponentialFamily {
  std::size_t n = 0;
  std::string name;
  ScalarField psi;
  // Optional closed forms. Missing pieces fall back to finite differences.
  VectorField gradient;
  MatrixField hessian;
  TensorValuedField third;
  std::function<bool(const Vector&)> domain;
  // Starting point for the Newton inversion eta -> theta.
  VectorField theta_guess;

  void require_domain(const Vector& th) const {
    if (static_cast<std::size_t>(th.size()) != n)
      throw UnsupportedShapeError("theta has dimension " + std::to_string(th.size()) + ", family has " +
                                  std::to_string(n));
    if (!th.allFinite() || (domain && !domain(th)))
      throw EvaluationDomainError("theta outside the natural parameter domain of " + name);
  }

  ScalarField guarded_psi() const {
    return [this](const Vector& th) {
      require_domain(th);
      return psi(th);
    };
  }

  Vector grad(const Vector& th) const {
    require_domain(th);
    if (gradient) return gradient(th);
    return differentiate(guarded_psi(), Point(th, Chart::Theta), 1).to_vector();
  }

  Matrix hess(const Vector& th) const {
    require_domain(th);
    if (hessian) return hessian(th);
    return differentiate(guarded_psi(), Point(th, Chart::Theta), 2).to_matrix();
  }

  TensorField third_derivative(const Vector& th) const {
    require_domain(th);
    if (third) return third(th);
    if (hessian) {
      auto field = [this](const Vector& y) {
        require_domain(y);
        return TensorField::from_matrix(hessian(y));
      };
      return derivative(field, th).symmetrized();
    }
    return differentiate(guarded_psi(), Point(th, Chart::Theta), 3);
  }
};

/// A point together with its Legendre partner and both potentials.
struct DualPair {
  Point theta;
  Point eta;
  double psi_value = 0.0;
  double phi_value = 0.0;

  double legendre_residual() const {
    return psi_value + phi_value - theta.coords.dot(eta.coords);
  }
};

inline void require_chart(const Point& p, Chart c, const char* op) {
  if (p.chart != c)
    throw ChartError(std::string(op) + ": expected a " + std::string(to_string(c)) + " point, got " +
                     std::string(to_string(p.chart)));
}

inline Point eta_of_theta(const ExponentialFamily& fam, const Point& theta) {
  require_chart(theta, Chart::Theta, "eta_of_theta");
  return Point(fam.grad(theta.coords), Chart::Eta);
}

inline DualPair theta_of_eta(const ExponentialFamily& fam, const Point& eta, const Point& guess) {
  require_chart(eta, Chart::Eta, "theta_of_eta");
  const double tol = 1e-13 * std::max(1.0, eta.coords.lpNorm<Eigen::Infinity>());
  const Point th = newton_solve([&fam](const Vector& x) { return fam.grad(x); }, eta,
                                Point(guess.coords, Chart::Theta), tol,
                                [&fam](const Vector& x) { return fam.hess(x); });
  DualPair out;
  out.theta = th;
  out.eta = eta;
  out.psi_value = fam.guarded_psi()(th.coords);
  // phi is evaluated pointwise through the Legendre relation.
  out.phi_value = th.coords.dot(eta.coords) - out.psi_value;
  return out;
}

inline DualPair theta_of_eta(const ExponentialFamily& fam, const Point& eta) {
  const Vector guess = fam.theta_guess ? fam.theta_guess(eta.coords) : eta.coords;
  return theta_of_eta(fam, eta, Point(guess, Chart::Theta));
}

inline void require_positive_definite(const Matrix& g, const std::string& what) {
  Eigen::LLT<Matrix> llt(0.5 * (g + g.transpose()));
  if (llt.info() != Eigen::Success) throw ModelMisspecificationError(what + " is not positive definite");
}

/// Fisher metric. In the theta chart this is g_ij = d_i d_j psi; in the eta chart
/// the contravariant g^{ij} = d^i d^j phi is returned.
inline TensorField metric(const ExponentialFamily& fam, const Point& at) {
  if (at.chart == Chart::Theta) {
    Matrix g = fam.hess(at.coords);
    require_positive_definite(g, "Hessian of psi");
    return TensorField::from_matrix(g);
  }
  if (at.chart == Chart::Eta) {
    const DualPair dp = theta_of_eta(fam, at);
    Matrix g = fam.hess(dp.theta.coords);
    require_positive_definite(g, "Hessian of psi");
    return TensorField::from_matrix(invert(g), Variance::Contravariant, Variance::Contravariant);
  }
  throw ChartError("metric: family metrics live on the theta or eta chart");
}

inline TensorField skewness(const ExponentialFamily& fam, const Point& theta) {
  require_chart(theta, Chart::Theta, "skewness");
  return fam.third_derivative(theta.coords);
}

/// Gamma^(alpha)_ijk in the theta chart, where it reduces to ((1 - alpha)/2) T_ijk.
inline TensorField alpha_connection(const ExponentialFamily& fam, const Point& theta, double alpha) {
  return skewness(fam, theta) * ((1.0 - alpha) / 2.0);
}

/// Transforms a covariant connection to a new chart.
///   gamma     Gamma_ijk in the old chart (n x n x n)
///   basis     B(beta, i) = d old^i / d new^beta (m x n)
///   dbasis    dB(beta, gamma, i) = d_beta B(gamma, i)
///   g_old     metric g_ij in the old chart
inline TensorField connection_coordinate_change(const TensorField& gamma, const Matrix& basis,
                                                const TensorField& dbasis, const Matrix& g_old) {
  const auto m = static_cast<std::size_t>(basis.rows());
  const auto n = static_cast<std::size_t>(basis.cols());
  if (gamma.order() != 3 || gamma.dim(0) != n || g_old.rows() != basis.cols())
    throw UnsupportedShapeError("connection_coordinate_change: shape mismatch");
  if (dbasis.order() != 3 || dbasis.dim(0) != m || dbasis.dim(1) != m || dbasis.dim(2) != n)
    throw UnsupportedShapeError("connection_coordinate_change: dB must be m x m x n");
  Eigen::FullPivLU<Matrix> lu(basis);
  lu.setThreshold(1e-12);
  if (static_cast<std::size_t>(lu.rank()) < m) throw ChartError("coordinate change basis is rank deficient");

  // Contract each old index with B in turn.
  TensorField a = TensorField::covariant(3, m);
  std::vector<double> tmp1(m * n * n, 0.0);
  std::vector<double> tmp2(m * m * n, 0.0);
  for (std::size_t b = 0; b < m; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      const double bi = basis(b, i);
      if (bi == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) tmp1[(b * n + j) * n + k] += bi * gamma(i, j, k);
    }
  for (std::size_t b = 0; b < m; ++b)
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t j = 0; j < n; ++j) {
        const double cj = basis(c, j);
        if (cj == 0.0) continue;
        for (std::size_t k = 0; k < n; ++k) tmp2[(b * m + c) * n + k] += cj * tmp1[(b * n + j) * n + k];
      }
  const Matrix gb = g_old * basis.transpose();  // gb(j, d) = g_ij B_d^i
  for (std::size_t b = 0; b < m; ++b)
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t d = 0; d < m; ++d) {
        double v = 0.0;
        for (std::size_t k = 0; k < n; ++k) v += tmp2[(b * m + c) * n + k] * basis(d, k);
        for (std::size_t j = 0; j < n; ++j) v += gb(j, d) * dbasis(b, c, j);
        a(b, c, d) = v;
      }
  return a;
}

/// Metric and the two dually flat connections over one chart. Every other
/// alpha-connection is the affine combination of the e (alpha = 1) and
/// m (alpha = -1) connections.
struct StatisticalChart {
  std::size_t dim = 0;
  Chart chart = Chart::Theta;
  MatrixField metric;
  TensorValuedField e_connection;
  TensorValuedField m_connection;

  TensorField connection(const Vector& x, double alpha) const {
    TensorField out = e_connection(x) * ((1.0 + alpha) / 2.0);
    out += m_connection(x) * ((1.0 - alpha) / 2.0);
    return out;
  }
};

inline StatisticalChart theta_chart(const ExponentialFamily& fam) {
  StatisticalChart c;
  c.dim = fam.n;
  c.chart = Chart::Theta;
  c.metric = [fam](const Vector& th) { return fam.hess(th); };
  c.e_connection = [n = fam.n](const Vector&) { return TensorField::covariant(3, n); };
  c.m_connection = [fam](const Vector& th) { return fam.third_derivative(th); };
  return c;
}

/// The expectation chart. Connections are obtained from the theta chart by
/// connection_coordinate_change with B = d theta / d eta = g^{-1}.
inline StatisticalChart eta_chart(const ExponentialFamily& fam) {
  struct Local {
    Matrix g, ginv, basis;
    TensorField t, dbasis;
  };
  auto local = [fam](const Vector& eta) {
    Local l;
    const Vector th = theta_of_eta(fam, Point(eta, Chart::Eta)).theta.coords;
    l.g = fam.hess(th);
    l.ginv = invert(l.g);
    l.t = fam.third_derivative(th);
    l.basis = l.ginv;
    // d_b g^{ci} = -g^{bx} g^{cy} g^{iz} T_xyz
    const std::size_t n = fam.n;
    l.dbasis = TensorField::covariant(3, n);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t i = 0; i < n; ++i) {
          double v = 0.0;
          for (std::size_t x = 0; x < n; ++x)
            for (std::size_t y = 0; y < n; ++y)
              for (std::size_t z = 0; z < n; ++z) v += l.ginv(b, x) * l.ginv(c, y) * l.ginv(i, z) * l.t(x, y, z);
          l.dbasis(b, c, i) = -v;
        }
    return l;
  };
  StatisticalChart c;
  c.dim = fam.n;
  c.chart = Chart::Eta;
  c.metric = [fam](const Vector& eta) {
    return invert(fam.hess(theta_of_eta(fam, Point(eta, Chart::Eta)).theta.coords));
  };
  c.e_connection = [local, n = fam.n](const Vector& eta) {
    const Local l = local(eta);
    return connection_coordinate_change(TensorField::covariant(3, n), l.basis, l.dbasis, l.g);
  };
  c.m_connection = [local](const Vector& eta) {
    const Local l = local(eta);
    return connection_coordinate_change(l.t, l.basis, l.dbasis, l.g);
  };
  return c;
}

/// Raises the last index of a covariant connection: Gamma_jk^l = Gamma_jkr g^{rl}.
inline TensorField raise_last(const TensorField& gamma, const Matrix& ginv) {
  const std::size_t d = gamma.dim(0);
  TensorField out({d, d, d}, {Variance::Covariant, Variance::Covariant, Variance::Contravariant});
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t l = 0; l < d; ++l) {
        double v = 0.0;
        for (std::size_t r = 0; r < d; ++r) v += gamma(j, k, r) * ginv(r, l);
        out(j, k, l) = v;
      }
  return out;
}

/// Mixed curvature R_ijk^l of a connection field given in mixed form
/// Gamma_jk^l. Derivatives of the connection are central differences.
inline TensorField rc_curvature_mixed(const TensorValuedField& mixed, const Vector& x,
                                      std::optional<double> step = {}) {
  const TensorField g0 = mixed(x);
  const TensorField dg = derivative(mixed, x, step);  // dg(i, j, k, l) = d_i Gamma_jk^l
  const std::size_t d = g0.dim(0);
  TensorField r({d, d, d, d}, {Variance::Covariant, Variance::Covariant, Variance::Covariant,
                               Variance::Contravariant});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < d; ++l) {
          double v = dg(i, j, k, l) - dg(j, i, k, l);
          for (std::size_t s = 0; s < d; ++s) v += g0(j, k, s) * g0(i, s, l) - g0(i, k, s) * g0(j, s, l);
          r(i, j, k, l) = v;
        }
  return r;
}

/// Covariant alpha-Riemann-Christoffel curvature R_ijkl = R_ijk^m g_ml at `at`.
inline TensorField rc_curvature(const StatisticalChart& chart, double alpha, const Point& at,
                                std::optional<double> step = {}) {
  if (at.dim() != chart.dim) throw UnsupportedShapeError("rc_curvature: point dimension mismatch");
  auto mixed = [&chart, alpha](const Vector& x) {
    return raise_last(chart.connection(x, alpha), invert(chart.metric(x)));
  };
  const TensorField rm = rc_curvature_mixed(mixed, at.coords, step);
  const Matrix g = chart.metric(at.coords);
  const std::size_t d = chart.dim;
  TensorField out = TensorField::covariant(4, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < d; ++l) {
          double v = 0.0;
          for (std::size_t s = 0; s < d; ++s) v += rm(i, j, k, s) * g(s, l);
          out(i, j, k, l) = v;
        }
  return out;
}

/// Residual of d_i g_jk = Gamma^(alpha)_ijk + Gamma^(-alpha)_ikj at `at` (max norm).
inline double duality_residual(const StatisticalChart& chart, double alpha, const Point& at,
                               std::optional<double> step = {}) {
  auto gfield = [&chart](const Vector& x) { return TensorField::from_matrix(chart.metric(x)); };
  const TensorField dg = derivative(gfield, at.coords, step);
  const TensorField ga = chart.connection(at.coords, alpha);
  const TensorField gm = chart.connection(at.coords, -alpha);
  const std::size_t d = chart.dim;
  double worst = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        worst = std::max(worst, std::abs(dg(i, j, k) - ga(i, j, k) - gm(i, k, j)));
  return worst;
}

/// Max-norm residual of R^(alpha)_ijkl + R^(-alpha)_ijlk.
inline double curvature_duality_residual(const TensorField& r_alpha, const TensorField& r_minus) {
  return max_abs_diff(r_alpha, r_minus.permuted({0, 1, 3, 2}) * -1.0);
}

}  // namespace confgeom
