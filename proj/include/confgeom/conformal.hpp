#pragma once

// Conformal transformations by a gauge nu > 0: transformed metric, skewness,
// connections and curvature; Weyl-Schouten tensors and flatness tests; the
// explicit gauges for full families and dual quadric hypersurfaces.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "confgeom/errors.hpp"
#include "confgeom/expfam.hpp"
#include "confgeom/geometry.hpp"
#include "confgeom/tensor.hpp"
#include "confgeom/tensorops.hpp"

namespace confgeom {

struct Gauge {
  std::size_t dim = 0;
  Chart chart = Chart::Theta;
  std::string name;
  ScalarField nu;
  VectorField s;   // optional closed form of d_k log nu
  MatrixField ds;  // optional closed form of d_i s_j

  double value(const Vector& x) const {
    const double v = nu(x);
    if (!std::isfinite(v) || !(v > 0.0))
      throw GaugeSingularityError("gauge " + name + " is not finite and positive at the probed point");
    return v;
  }

  Vector log_gradient(const Vector& x) const {
    if (s) return s(x);
    value(x);
    return differentiate([this](const Vector& y) { return std::log(value(y)); }, Point(x, chart), 1)
        .to_vector();
  }

  Matrix log_hessian(const Vector& x) const {
    if (ds) return ds(x);
    if (s) {
      const Matrix j = jacobian([this](const Vector& y) { return s(y); }, x);
      return 0.5 * (j + j.transpose());
    }
    return differentiate([this](const Vector& y) { return std::log(value(y)); }, Point(x, chart), 2)
        .to_matrix();
  }
};

inline Gauge constant_gauge(std::size_t dim, Chart chart, double c) {
  if (!(c > 0.0)) throw ParameterError("constant gauge must be positive");
  Gauge g;
  g.dim = dim;
  g.chart = chart;
  g.name = "constant";
  g.nu = [c](const Vector&) { return c; };
  g.s = [dim](const Vector&) { return Vector(Vector::Zero(static_cast<Eigen::Index>(dim))); };
  g.ds = [dim](const Vector&) {
    return Matrix(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
  };
  return g;
}

/// Gauge nu = exp(f) for a scalar field f with optional closed-form derivatives.
inline Gauge exp_gauge(std::size_t dim, Chart chart, ScalarField f, VectorField df = {}, MatrixField ddf = {}) {
  Gauge g;
  g.dim = dim;
  g.chart = chart;
  g.name = "exp";
  g.nu = [f](const Vector& x) { return std::exp(f(x)); };
  g.s = std::move(df);
  g.ds = std::move(ddf);
  return g;
}

struct MetricSkewness {
  Matrix g;
  TensorField t;
};

inline MetricSkewness conformal_metric_skewness(const Matrix& g, const TensorField& t, double nu,
                                                const Vector& s) {
  const std::size_t d = static_cast<std::size_t>(g.rows());
  MetricSkewness out{nu * g, TensorField::covariant(3, d)};
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        out.t(i, j, k) = nu * (t(i, j, k) + g(i, j) * s(k) + g(j, k) * s(i) + g(k, i) * s(j));
  return out;
}

inline MetricSkewness conformal_metric_skewness(const Matrix& g, const TensorField& t, const Gauge& gauge,
                                                const Point& at) {
  return conformal_metric_skewness(g, t, gauge.value(at.coords), gauge.log_gradient(at.coords));
}

inline TensorField conformal_connection(const TensorField& gamma, const Matrix& g, double nu, const Vector& s,
                                        double alpha) {
  const std::size_t d = static_cast<std::size_t>(g.rows());
  const double a = (1.0 - alpha) / 2.0;
  const double b = (1.0 + alpha) / 2.0;
  TensorField out = TensorField::covariant(3, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        out(i, j, k) = nu * (gamma(i, j, k) + a * (g(k, i) * s(j) + g(k, j) * s(i)) - b * g(i, j) * s(k));
  return out;
}

inline TensorField conformal_connection(const TensorField& gamma, const Matrix& g, const Gauge& gauge,
                                        double alpha, const Point& at) {
  return conformal_connection(gamma, g, gauge.value(at.coords), gauge.log_gradient(at.coords), alpha);
}

namespace detail {

/// s^(alpha)_ij of the curvature transformation law.
inline Matrix s_alpha(const Matrix& g, const Matrix& ginv, const TensorField& gamma, const Vector& s,
                      const Matrix& ds, double alpha) {
  const auto d = g.rows();
  const double s2 = s.dot(ginv * s);
  Matrix out(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      double nabla = ds(i, j);
      for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index l = 0; l < d; ++l) nabla -= gamma(i, j, l) * ginv(l, k) * s(k);
      out(i, j) = (1.0 - alpha) / 2.0 *
                  (nabla - (1.0 - alpha) / 2.0 * s(i) * s(j) + (1.0 + alpha) / 4.0 * g(i, j) * s2);
    }
  return out;
}

}  // namespace detail

/// Curvature of the transformed alpha-connection from the untransformed
/// curvature, metric and the alpha and -alpha connections.
inline TensorField conformal_rc_curvature(const TensorField& r, const Matrix& g, const TensorField& gamma_alpha,
                                          const TensorField& gamma_minus, double nu, const Vector& s,
                                          const Matrix& ds, double alpha) {
  const std::size_t d = static_cast<std::size_t>(g.rows());
  const Matrix ginv = invert(g);
  const Matrix sp = detail::s_alpha(g, ginv, gamma_alpha, s, ds, alpha);
  const Matrix sm = detail::s_alpha(g, ginv, gamma_minus, s, ds, -alpha);
  TensorField out = TensorField::covariant(4, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < d; ++l)
          out(i, j, k, l) = nu * (r(i, j, k, l) - g(i, l) * sp(j, k) + g(j, l) * sp(i, k) - g(j, k) * sm(i, l) +
                                  g(i, k) * sm(j, l));
  return out;
}

inline TensorField conformal_rc_curvature(const TensorField& r, const Matrix& g, const TensorField& gamma_alpha,
                                          const TensorField& gamma_minus, const Gauge& gauge, double alpha,
                                          const Point& at) {
  return conformal_rc_curvature(r, g, gamma_alpha, gamma_minus, gauge.value(at.coords),
                                gauge.log_gradient(at.coords), gauge.log_hessian(at.coords), alpha);
}

/// The transformed statistical manifold over the same chart.
inline StatisticalChart conformal_chart(const StatisticalChart& base, const Gauge& gauge) {
  if (gauge.dim != base.dim) throw UnsupportedShapeError("gauge and chart dimensions differ");
  StatisticalChart c;
  c.dim = base.dim;
  c.chart = base.chart;
  c.metric = [base, gauge](const Vector& x) { return Matrix(gauge.value(x) * base.metric(x)); };
  c.e_connection = [base, gauge](const Vector& x) {
    return conformal_connection(base.e_connection(x), base.metric(x), gauge.value(x), gauge.log_gradient(x), 1.0);
  };
  c.m_connection = [base, gauge](const Vector& x) {
    return conformal_connection(base.m_connection(x), base.metric(x), gauge.value(x), gauge.log_gradient(x), -1.0);
  };
  return c;
}

struct WeylSchouten {
  TensorField w4;     // W^(-1)l_ijk, last slot contravariant
  TensorField w3;     // W^(-1)_ijk
  TensorField w2;     // W^(-1)_ij
  TensorField ricci;  // R^(-1)_ij = R^(-1)l_lij
};

struct WeylOptions {
  // Outer step for differentiating the Ricci tensor, whose values already
  // carry first-difference error.
  double ricci_step = 0x1p-10;
  std::optional<double> curvature_step;
};

namespace detail {

inline TensorField mixed_curvature(const StatisticalChart& chart, const Vector& x, std::optional<double> step) {
  auto mixed = [&chart](const Vector& y) { return raise_last(chart.m_connection(y), invert(chart.metric(y))); };
  return rc_curvature_mixed(mixed, x, step);
}

inline TensorField ricci_of(const TensorField& rm) {
  const std::size_t d = rm.dim(0);
  TensorField ric = TensorField::covariant(2, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      for (std::size_t l = 0; l < d; ++l) v += rm(l, i, j, l);
      ric(i, j) = v;
    }
  return ric;
}

}  // namespace detail

inline WeylSchouten weyl_schouten(const StatisticalChart& chart, const Point& at, const WeylOptions& opt = {}) {
  const std::size_t d = chart.dim;
  if (d < 2) throw UnsupportedShapeError("Weyl-Schouten tensors need dimension >= 2");
  const Vector& x = at.coords;
  const TensorField rm = detail::mixed_curvature(chart, x, opt.curvature_step);

  WeylSchouten out;
  out.ricci = detail::ricci_of(rm);
  const double inv = 1.0 / static_cast<double>(d - 1);

  out.w4 = TensorField({d, d, d, d}, {Variance::Covariant, Variance::Covariant, Variance::Covariant,
                                      Variance::Contravariant});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < d; ++l)
          out.w4(i, j, k, l) = rm(i, j, k, l) - inv * ((i == l ? out.ricci(j, k) : 0.0) -
                                                       (j == l ? out.ricci(i, k) : 0.0));

  // Covariant derivative of the Ricci tensor with the (-1)-connection.
  auto ricci_field = [&chart, &opt](const Vector& y) {
    return detail::ricci_of(detail::mixed_curvature(chart, y, opt.curvature_step));
  };
  const TensorField dric = derivative(ricci_field, x, opt.ricci_step);
  const TensorField gm = raise_last(chart.m_connection(x), invert(chart.metric(x)));
  auto nabla = [&](std::size_t i, std::size_t j, std::size_t k) {
    double v = dric(i, j, k);
    for (std::size_t l = 0; l < d; ++l) v -= gm(i, j, l) * out.ricci(l, k) + gm(i, k, l) * out.ricci(j, l);
    return v;
  };
  out.w3 = TensorField::covariant(3, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) out.w3(i, j, k) = inv * (nabla(i, j, k) - nabla(j, i, k));

  out.w2 = TensorField::covariant(2, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out.w2(i, j) = out.ricci(i, j) - out.ricci(j, i);
  return out;
}

struct FlatnessVerdict {
  bool flat = false;
  std::string criterion;  // "W4" for dimension >= 3, "W3+W2" for dimension 2
  double w4 = 0.0;
  double w3 = 0.0;
  double w2 = 0.0;
  double residual = 0.0;
  Vector worst_point;
};

/// Conformal flatness over a probe grid: W4 decides for dimension >= 3,
/// W3 and W2 decide for dimension 2.
inline FlatnessVerdict flatness_test(const StatisticalChart& chart, const std::vector<Vector>& grid,
                                     double tolerance = 1e-4, const WeylOptions& opt = {}) {
  if (grid.empty()) throw ParameterError("flatness_test needs a nonempty probe grid");
  FlatnessVerdict v;
  v.criterion = chart.dim >= 3 ? "W4" : "W3+W2";
  for (const Vector& x : grid) {
    const WeylSchouten w = weyl_schouten(chart, Point(x, chart.chart), opt);
    const double w4 = w.w4.max_abs();
    const double w3 = w.w3.max_abs();
    const double w2 = w.w2.max_abs();
    v.w4 = std::max(v.w4, w4);
    v.w3 = std::max(v.w3, w3);
    v.w2 = std::max(v.w2, w2);
    const double r = chart.dim >= 3 ? w4 : std::max(w3, w2);
    if (r >= v.residual) {
      v.residual = r;
      v.worst_point = x;
    }
  }
  v.flat = v.residual <= tolerance;
  return v;
}

/// Conformal coordinates together with the dual potentials of the
/// transformed manifold.
struct ConformalCoordinates {
  Chart source = Chart::Eta;
  VectorField map;           // source point -> conformal coordinates
  MatrixField jacobian;      // C(a, abar) = d map^abar / d source^a
  VectorField inverse;       // conformal coordinates -> source point (may be empty)
  ScalarField phi_bar;       // phi-bar as a function of the conformal coordinates
  VectorField dual;          // conformal coordinates -> dual affine coordinates
  ScalarField psi_bar;       // psi-bar as a function of the dual affine coordinates
};

struct ExpfamGauge {
  Gauge gauge;  // over the eta chart
  ConformalCoordinates coords;
  double c0 = 1.0;
  Vector c;
  Vector d;
  Matrix D;
  double sign = 1.0;  // sign of c0 + c.eta on the domain
};

/// The gauge nu(eta) = 1/|c0 + c.eta| with conformal coordinates
/// h = nu (d + D eta). `probes` are eta points on which the affine
/// denominator must keep one sign.
inline ExpfamGauge expfam_gauge(const ExponentialFamily& fam, double c0, const Vector& c, const Vector& d,
                                const Matrix& D, const std::vector<Vector>& probes = {}) {
  const auto n = static_cast<Eigen::Index>(fam.n);
  if (c.size() != n || d.size() != n || D.rows() != n || D.cols() != n)
    throw UnsupportedShapeError("expfam_gauge: constants have the wrong shape");
  Eigen::FullPivLU<Matrix> lu(D);
  if (lu.rank() < n) throw ParameterError("expfam_gauge: D must have full rank");

  ExpfamGauge out;
  out.c0 = c0;
  out.c = c;
  out.d = d;
  out.D = D;
  const Vector ref = probes.empty() ? Vector(Vector::Zero(n)) : probes.front();
  const double ref_den = c0 + c.dot(ref);
  if (ref_den == 0.0) throw GaugeSingularityError("expfam_gauge: c0 + c.eta vanishes at the reference point");
  out.sign = ref_den > 0.0 ? 1.0 : -1.0;
  for (const Vector& e : probes) {
    const double den = c0 + c.dot(e);
    if (!(den * out.sign > 0.0)) throw GaugeSingularityError("expfam_gauge: c0 + c.eta changes sign on the probes");
  }
  const double sign = out.sign;

  auto den = [c0, c, sign](const Vector& eta) {
    const double v = c0 + c.dot(eta);
    if (!(v * sign > 0.0)) throw GaugeSingularityError("expfam_gauge: c0 + c.eta crossed zero");
    return v;
  };

  Gauge& g = out.gauge;
  g.dim = fam.n;
  g.chart = Chart::Eta;
  g.name = "affine";
  g.nu = [den](const Vector& eta) { return 1.0 / std::abs(den(eta)); };
  g.s = [den, c](const Vector& eta) { return Vector(-c / den(eta)); };
  g.ds = [den, c](const Vector& eta) {
    const double v = den(eta);
    return Matrix(c * c.transpose() / (v * v));
  };

  ConformalCoordinates& cc = out.coords;
  cc.source = Chart::Eta;
  cc.map = [den, d, D](const Vector& eta) { return Vector((d + D * eta) / std::abs(den(eta))); };
  cc.jacobian = [den, c, d, D](const Vector& eta) {
    // d h_alpha / d eta_i = nu (D_alpha^i + (d + D eta)_alpha s^i)
    const double v = den(eta);
    const double nu = 1.0 / std::abs(v);
    const Vector s = -c / v;
    const Vector y = d + D * eta;
    return Matrix((nu * (D + y * s.transpose())).transpose());
  };
  cc.inverse = [c0, c, d, D, sign](const Vector& h) {
    // sign * (d + D eta) = h (c0 + c.eta) is linear in eta.
    const Matrix a = sign * D - h * c.transpose();
    const Vector eta = a.fullPivLu().solve(h * c0 - sign * d);
    if (!eta.allFinite() || !((c0 + c.dot(eta)) * sign > 0.0))
      throw EvaluationDomainError("expfam_gauge: h is outside the image of the conformal map");
    return eta;
  };
  cc.phi_bar = [fam, inv = cc.inverse, nu = g.nu](const Vector& h) {
    const Vector eta = inv(h);
    const DualPair dp = theta_of_eta(fam, Point(eta, Chart::Eta));
    return nu(eta) * dp.phi_value;
  };
  cc.dual = [fam, inv = cc.inverse, jac = cc.jacobian, nu = g.nu, s = g.s](const Vector& h) {
    // xi = d phi-bar / d h = (dh/deta)^{-T} d(nu phi)/d eta, d(nu phi)/d eta = nu (theta + phi s)
    const Vector eta = inv(h);
    const DualPair dp = theta_of_eta(fam, Point(eta, Chart::Eta));
    const Vector grad = nu(eta) * (dp.theta.coords + dp.phi_value * s(eta));
    return Vector(jac(eta).fullPivLu().solve(grad));
  };
  cc.psi_bar = [phi = cc.phi_bar, dual = cc.dual, map = cc.map, n](const Vector& xi) {
    // Invert xi = dual(h) starting from h at eta = 0, then use the Legendre relation.
    const Vector guess = map(Vector::Zero(n));
    const Point h = newton_solve(dual, Point(xi, Chart::UBar), Point(guess, Chart::UBar),
                                 1e-12 * std::max(1.0, xi.lpNorm<Eigen::Infinity>()));
    return xi.dot(h.coords) - phi(h.coords);
  };
  return out;
}

/// Residual of the quadric gauge equation
///   d_a s_b - Gamma^(-1)c_ab s_c - s_a s_b - k0 l0 g_ab
/// at one point (max norm).
inline double quadric_gauge_residual(const CurvedFamily& fam, const Gauge& gauge, double k0l0, const Vector& u) {
  const LocalGeometry lg = local_geometry(fam, Point(u, Chart::U));
  const ConnectionPair gam = sub_connections(lg);
  const Vector s = gauge.log_gradient(u);
  const Matrix ds = gauge.log_hessian(u);
  const auto m = static_cast<Eigen::Index>(fam.m);
  const Vector s_up = lg.ginv * s;
  double worst = 0.0;
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) {
      double v = ds(a, b) - s(a) * s(b) - k0l0 * lg.g(a, b);
      for (Eigen::Index c = 0; c < m; ++c)
        v -= gam.m(static_cast<std::size_t>(a), static_cast<std::size_t>(b), static_cast<std::size_t>(c)) * s_up(c);
      worst = std::max(worst, std::abs(v));
    }
  return worst;
}

struct QuadricGauge {
  Gauge gauge;  // over the u chart
  ConformalCoordinates coords;
  Vector eta0;
  Matrix D;  // m x n
  double k0l0 = 0.0;
  double pde_residual = 0.0;
};

struct QuadricGaugeOptions {
  double tolerance = 1e-6;
};

/// Registers a closed-form gauge for a dual quadric hypersurface, checks it
/// against the gauge equation on `grid`, and builds ubar = nu D (eta - eta0).
inline QuadricGauge quadric_gauge(const CurvedFamily& fam, const Classification& cls, const Gauge& gauge,
                                  const Vector& eta0, const Matrix& D, const std::vector<Vector>& grid,
                                  const QuadricGaugeOptions& opt = {}) {
  if (!cls.dual_quadric.flag) throw ParameterError("quadric_gauge: the family is not a dual quadric hypersurface");
  if (gauge.chart != Chart::U || gauge.dim != fam.m) throw UnsupportedShapeError("quadric_gauge: gauge must live on u");
  const auto m = static_cast<Eigen::Index>(fam.m);
  const auto n = static_cast<Eigen::Index>(fam.n());
  if (D.rows() != m || D.cols() != n || eta0.size() != n)
    throw UnsupportedShapeError("quadric_gauge: D must be m x n and eta0 of length n");
  Eigen::FullPivLU<Matrix> lu(D);
  if (lu.rank() < m) throw ParameterError("quadric_gauge: D must have rank m");

  QuadricGauge out;
  out.gauge = gauge;
  out.eta0 = eta0;
  out.D = D;
  out.k0l0 = cls.k0 * cls.l0;
  for (const Vector& u : grid)
    out.pde_residual = std::max(out.pde_residual, quadric_gauge_residual(fam, gauge, out.k0l0, u));
  if (out.pde_residual > opt.tolerance)
    throw GaugeMismatchError("quadric gauge residual " + std::to_string(out.pde_residual) + " exceeds tolerance");

  ConformalCoordinates& cc = out.coords;
  cc.source = Chart::U;
  cc.map = [fam, gauge, eta0, D](const Vector& u) { return Vector(gauge.value(u) * D * (fam.eta(u) - eta0)); };
  cc.jacobian = [fam, gauge, eta0, D](const Vector& u) {
    // C(a, abar) = nu s_a [D (eta - eta0)]^abar + nu [D B_a]^abar
    const LocalGeometry lg = local_geometry(fam, Point(u, Chart::U));
    const double nu = gauge.value(u);
    const Vector s = gauge.log_gradient(u);
    const Vector y = D * (lg.eta - eta0);
    return Matrix(nu * (s * y.transpose() + lg.frame.tangent_eta * D.transpose()));
  };
  return out;
}

/// phi-bar of the conformal dual quadric at the point ubar(u).
inline double quadric_phi_bar(const QuadricGauge& q, const Vector& u) { return q.gauge.value(u) / q.k0l0; }

/// Gamma-bar^(-1) in the ubar chart at ubar(u): the u-chart transformed
/// connection pushed through the inverse Jacobian of the ubar map.
inline TensorField ubar_connection(const CurvedFamily& fam, const QuadricGauge& q, const Vector& u) {
  const LocalGeometry lg = local_geometry(fam, Point(u, Chart::U));
  const ConnectionPair gam = sub_connections(lg);
  const double nu = q.gauge.value(u);
  const Vector s = q.gauge.log_gradient(u);
  const TensorField gbar = conformal_connection(gam.m, lg.g, nu, s, -1.0);
  const Matrix c = q.coords.jacobian(u);  // c(a, abar)
  const Matrix b = c.inverse();           // b(abar, a) = d u^a / d ubar^abar
  // dc(e, d, f) = d_e d_d ubar^f with
  //   d_e d_d (nu y) = nu [(ds_ed + s_e s_d) y + s_e dy_d + s_d dy_e + ddy_ed],  y = D (eta - eta0)
  const Matrix ds = q.gauge.log_hessian(u);
  const Vector y = q.D * (lg.eta - q.eta0);
  const Matrix dy = lg.frame.tangent_eta * q.D.transpose();  // dy(a, f)
  const std::size_t m = fam.m;
  const std::size_t n = fam.n();
  TensorField dc = TensorField::covariant(3, m);
  for (std::size_t e = 0; e < m; ++e)
    for (std::size_t d = 0; d < m; ++d)
      for (std::size_t f = 0; f < m; ++f) {
        const auto ee = static_cast<Eigen::Index>(e);
        const auto dd = static_cast<Eigen::Index>(d);
        const auto ff = static_cast<Eigen::Index>(f);
        double ddy = 0.0;
        for (std::size_t j = 0; j < n; ++j) ddy += q.D(ff, static_cast<Eigen::Index>(j)) * lg.dtangent_eta(e, d, j);
        dc(e, d, f) = nu * ((ds(ee, dd) + s(ee) * s(dd)) * y(ff) + s(ee) * dy(dd, ff) + s(dd) * dy(ee, ff) + ddy);
      }
  // dB(abar, bbar, x) = -B(f, x) dc(e, d, f) B(abar, e) B(bbar, d)
  TensorField db({m, m, m}, {Variance::Covariant, Variance::Covariant, Variance::Contravariant});
  for (std::size_t ab = 0; ab < m; ++ab)
    for (std::size_t bb = 0; bb < m; ++bb)
      for (std::size_t bx = 0; bx < m; ++bx) {
        double v = 0.0;
        for (std::size_t f = 0; f < m; ++f)
          for (std::size_t e = 0; e < m; ++e)
            for (std::size_t d = 0; d < m; ++d) v -= b(f, bx) * dc(e, d, f) * b(ab, e) * b(bb, d);
        db(ab, bb, bx) = v;
      }
  return connection_coordinate_change(gbar, b, db, Matrix(nu * lg.g));
}

struct SubQuantities {
  TensorField gamma_bar;  // Gamma-bar^(-1)_abc
  TensorField h_bar;      // H-bar^(1)_{ab kappa}
  TensorField k;          // K^(1)_{ab kappa}
};

/// Transformed sub-manifold quantities. `s_kappa` defaults to the mean
/// curvature H^(1)_kappa at u.
inline SubQuantities conformal_sub_quantities(const CurvedFamily& fam, const Gauge& gauge, const Vector& u,
                                              std::optional<Vector> s_kappa = {}) {
  const LocalGeometry lg = local_geometry(fam, Point(u, Chart::U));
  const ConnectionPair gam = sub_connections(lg);
  const EsCurvature es = es_curvature(lg);
  const double nu = gauge.value(u);
  const Vector s = gauge.log_gradient(u);
  const std::size_t m = fam.m;
  const std::size_t k = fam.codim();

  Vector mean(static_cast<Eigen::Index>(k));
  for (std::size_t q = 0; q < k; ++q) {
    double v = 0.0;
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) v += es.h1(a, b, q) * lg.ginv(a, b);
    mean(static_cast<Eigen::Index>(q)) = v / static_cast<double>(m);
  }
  const Vector sk = s_kappa ? *s_kappa : mean;
  if (sk.size() != static_cast<Eigen::Index>(k)) throw UnsupportedShapeError("s_kappa has the wrong length");

  SubQuantities out{conformal_connection(gam.m, lg.g, nu, s, -1.0), es.h1, es.h1};
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t q = 0; q < k; ++q) {
        const auto qq = static_cast<Eigen::Index>(q);
        out.h_bar(a, b, q) = nu * (es.h1(a, b, q) - lg.g(a, b) * sk(qq));
        out.k(a, b, q) = es.h1(a, b, q) - lg.g(a, b) * mean(qq);
      }
  return out;
}

}  // namespace confgeom
