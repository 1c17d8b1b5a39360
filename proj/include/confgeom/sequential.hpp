#pragma once

// Sequential estimation: the stopping rule, closed-form MLE trajectories,
// bias correction and the second-order covariance expansion, and
// Cramer-Rao bounds in the u and ubar charts.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <utility>

#include "confgeom/conformal.hpp"
#include "confgeom/errors.hpp"
#include "confgeom/geometry.hpp"
#include "confgeom/models.hpp"
#include "confgeom/tensor.hpp"
#include "confgeom/tensorops.hpp"

namespace confgeom {

/// Running sufficient statistic of a discrete-time sample path.
struct Trajectory {
  std::int64_t t = 0;
  Vector sum_x;

  explicit Trajectory(std::size_t n = 0) : sum_x(Vector::Zero(static_cast<Eigen::Index>(n))) {}

  void push(const Vector& x) {
    sum_x += x;
    ++t;
  }
  Vector mean_x() const {
    if (t < 1) throw ParameterError("trajectory has no observations");
    return sum_x / static_cast<double>(t);
  }
};

struct StopDecision {
  std::int64_t tau = 0;
  double criterion_value = 0.0;
  double threshold = 0.0;
  // Criterion and threshold at tau - 1 when both were defined there.
  std::optional<double> previous_criterion;
  std::optional<double> previous_threshold;
};

struct EstimateBundle {
  Vector u_hat;
  Vector u_hat_star;
  Vector u_bar_hat;
};

// ---------------------------------------------------------------------------
// Observed information

/// -(1/m) g^ab(u) d_a d_b l(u) with l(u) = theta(u).sum_x - t psi(theta(u)),
/// using the frame derivatives: d_a d_b l = d_a B_b^i (sum_x - t eta)_i - t g_ab.
inline double observed_information(const CurvedFamily& fam, const Trajectory& traj, const Point& u_hat) {
  if (traj.t < 1) throw ParameterError("observed information needs t >= 1");
  const LocalGeometry lg = local_geometry(fam, u_hat);
  const double t = static_cast<double>(traj.t);
  const Vector resid = traj.sum_x - t * lg.eta;
  const auto m = static_cast<Eigen::Index>(fam.m);
  Matrix hess = -t * lg.g;
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b)
      for (Eigen::Index i = 0; i < resid.size(); ++i)
        hess(a, b) += lg.dtangent_theta(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                        static_cast<std::size_t>(i)) * resid(i);
  return -(lg.ginv * hess).trace() / static_cast<double>(m);
}

/// The same criterion with the log-likelihood Hessian taken by finite differences.
inline double observed_information_fd(const CurvedFamily& fam, const Trajectory& traj, const Point& u_hat) {
  if (traj.t < 1) throw ParameterError("observed information needs t >= 1");
  const LocalGeometry lg = local_geometry(fam, u_hat);
  const double t = static_cast<double>(traj.t);
  auto loglik = [&fam, &traj, t](const Vector& u) {
    const Vector th = fam.embed_theta(u);
    return th.dot(traj.sum_x) - t * fam.ambient.guarded_psi()(th);
  };
  const Matrix hess = differentiate(loglik, u_hat, 2).to_matrix();
  return -(lg.ginv * hess).trace() / static_cast<double>(fam.m);
}

/// Closed form at the MLE of a directional model: t |xbar| / r_dagger
/// (Minkowski norm on the hyperboloid).
inline double observed_information_at_mle(const DirectionalModel& model, const Trajectory& traj) {
  if (traj.t < 1) throw ParameterError("observed information needs t >= 1");
  return static_cast<double>(traj.t) * model.mean_norm(traj.mean_x()) / model.r_dagger();
}

// ---------------------------------------------------------------------------
// Stopping rule

struct StoppingOptions {
  std::int64_t t_min = 3;
  double cap_factor = 50.0;  // t_max = cap_factor * K * nu(u0)
};

/// One step of a stopping experiment: advance by one observation and return
/// (criterion, threshold), or nothing when the estimate is undefined at t.
using StoppingStep = std::function<std::optional<std::pair<double, double>>(std::int64_t)>;

/// First t >= t_min at which the criterion reaches the threshold.
inline StopDecision first_crossing(const StoppingStep& step, std::int64_t t_min, std::int64_t t_max) {
  if (t_min < 1 || t_max < t_min) throw ParameterError("stopping rule needs 1 <= t_min <= t_max");
  StopDecision d;
  std::optional<std::pair<double, double>> prev;
  for (std::int64_t t = 1; t <= t_max; ++t) {
    const auto cur = step(t);
    if (t >= t_min && cur && cur->first >= cur->second) {
      d.tau = t;
      d.criterion_value = cur->first;
      d.threshold = cur->second;
      if (prev) {
        d.previous_criterion = prev->first;
        d.previous_threshold = prev->second;
      }
      return d;
    }
    prev = cur;
  }
  throw RunawayStopError("stopping time exceeded the cap t_max = " + std::to_string(t_max));
}

struct StoppingResult {
  StopDecision decision;
  Trajectory trajectory;
  Point u_hat;
};

/// tau = inf{ t >= t_min : criterion(t) >= K nu(u_hat_t) + c }, sampling at u0.
inline StoppingResult run_stopping(const DirectionalModel& model, const Gauge& gauge, double k, const Point& u0,
                                   Rng& rng, const StoppingOptions& opt = {}) {
  if (!(k > 0.0)) throw ParameterError("K must be positive");
  const double c = model.stopping_constant();
  const double cap = opt.cap_factor * k * gauge.value(u0.coords);
  const auto t_max = static_cast<std::int64_t>(std::ceil(std::max(cap, static_cast<double>(opt.t_min))));

  StoppingResult res{{}, Trajectory(model.n()), Point()};
  auto step = [&](std::int64_t) -> std::optional<std::pair<double, double>> {
    res.trajectory.push(model.sample_unit(u0.coords, rng));
    try {
      res.u_hat = model.mle_direction(res.trajectory.mean_x());
    } catch (const MleUndefinedError&) {
      return std::nullopt;
    }
    double nu;
    try {
      nu = gauge.value(res.u_hat.coords);
    } catch (const GaugeSingularityError&) {
      return std::nullopt;
    }
    return std::make_pair(observed_information_at_mle(model, res.trajectory), k * nu + c);
  };
  res.decision = first_crossing(step, opt.t_min, t_max);
  return res;
}

// ---------------------------------------------------------------------------
// Bias correction and second-order covariance

namespace detail {

/// 'Gamma^(-1)a_bc = Gamma^(-1)a_bc + delta^a_b s_c + delta^a_c s_b, mixed (b, c, a).
inline TensorField primed_connection(const LocalGeometry& lg, const ConnectionPair& gam, const Vector& s) {
  const auto m = static_cast<std::size_t>(lg.g.rows());
  TensorField out = raise_last(gam.m, lg.ginv);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      out(a, b, a) += s(static_cast<Eigen::Index>(b));
      out(b, a, a) += s(static_cast<Eigen::Index>(b));
    }
  return out;
}

inline Vector gauge_gradient(const std::optional<Gauge>& gauge, const Vector& u, std::size_t m) {
  if (!gauge) return Vector::Zero(static_cast<Eigen::Index>(m));
  return gauge->log_gradient(u);
}

}  // namespace detail

/// Correction term of the bias-corrected MLE,
///   (1 / (2 n)) ('Gamma^(-1)a_bc g^bc),
/// with s = 0 when no gauge is given.
inline Vector bias_correction(const CurvedFamily& fam, const Point& u_hat, double effective_n,
                              const std::optional<Gauge>& gauge = {}) {
  if (!(effective_n > 0.0)) throw ParameterError("effective sample size must be positive");
  const LocalGeometry lg = local_geometry(fam, u_hat);
  const ConnectionPair gam = sub_connections(lg);
  const TensorField pg = detail::primed_connection(lg, gam, detail::gauge_gradient(gauge, u_hat.coords, fam.m));
  const auto m = static_cast<std::size_t>(fam.m);
  Vector out = Vector::Zero(static_cast<Eigen::Index>(m));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t c = 0; c < m; ++c)
        out(static_cast<Eigen::Index>(a)) += pg(b, c, a) * lg.ginv(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c));
  return out / (2.0 * effective_n);
}

inline Point bias_correct(const CurvedFamily& fam, const Point& u_hat, double effective_n,
                          const std::optional<Gauge>& gauge = {}) {
  return Point(u_hat.coords + bias_correction(fam, u_hat, effective_n, gauge), Chart::U);
}

/// Bias correction expressed in the ubar chart of a quadric gauge. It uses
/// the transformed connection, which vanishes in ubar.
inline Vector bias_correction_ubar(const CurvedFamily& fam, const QuadricGauge& q, const Point& u_hat,
                                   double effective_n) {
  if (!(effective_n > 0.0)) throw ParameterError("effective sample size must be positive");
  const LocalGeometry lg = local_geometry(fam, u_hat);
  const TensorField gbar = ubar_connection(fam, q, u_hat.coords);
  const Matrix c = q.coords.jacobian(u_hat.coords);
  const Matrix ginv_bar = c.transpose() * lg.ginv * c;  // g^{abar bbar} of the original metric
  const double nu = q.gauge.value(u_hat.coords);
  // 'Gamma^a_bc = Gamma-bar_bcd gbar^da with gbar = nu g
  const TensorField mixed = raise_last(gbar, Matrix(ginv_bar / nu));
  const auto m = fam.m;
  Vector out = Vector::Zero(static_cast<Eigen::Index>(m));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t cc = 0; cc < m; ++cc)
        out(static_cast<Eigen::Index>(a)) +=
            mixed(b, cc, a) * ginv_bar(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(cc));
  return out / (2.0 * effective_n);
}

struct SecondOrderTerms {
  Matrix gamma_sq;  // ('Gamma^(-1))^{2 ab}
  Matrix h_sq;      // ('H^(1))^{2 ab}
};

/// The two squared-tensor terms of the covariance expansion at u.
/// ('Gamma)^{2ab} = 'Gamma^a_cd 'Gamma^b_ef g^ce g^df.
/// ('H)^{2ab} contracts H^(1)_{ab kappa} = d_a B_b^i g_ij B_kappa^j over the
/// normal space with the inverse of g_{kappa lambda} = B_kappa^i g_ij B_lambda^j,
/// so the result does not depend on how the normal rows are scaled. With a
/// gauge, 'H = H - g s_kappa where s_kappa defaults to the mean curvature.
inline SecondOrderTerms second_order_terms(const CurvedFamily& fam, const Point& u,
                                           const std::optional<Gauge>& gauge = {},
                                           std::optional<Vector> s_kappa = {}) {
  const LocalGeometry lg = local_geometry(fam, u);
  const ConnectionPair gam = sub_connections(lg);
  const std::size_t m = fam.m;
  const std::size_t n = fam.n();
  const std::size_t k = fam.codim();
  const TensorField pg = detail::primed_connection(lg, gam, detail::gauge_gradient(gauge, u.coords, m));
  const auto mi = static_cast<Eigen::Index>(m);

  SecondOrderTerms out{Matrix::Zero(mi, mi), Matrix::Zero(mi, mi)};
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      double v = 0.0;
      for (std::size_t c = 0; c < m; ++c)
        for (std::size_t d = 0; d < m; ++d)
          for (std::size_t e = 0; e < m; ++e)
            for (std::size_t f = 0; f < m; ++f)
              v += pg(c, d, a) * pg(e, f, b) * lg.ginv(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(e)) *
                   lg.ginv(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(f));
      out.gamma_sq(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
    }
  if (k == 0) return out;

  const Matrix gn = lg.ambient_metric * lg.frame.normal_theta.transpose();  // (n, k)
  TensorField h({m, m, k}, {Variance::Covariant, Variance::Covariant, Variance::Covariant});
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t q = 0; q < k; ++q) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += lg.dtangent_theta(a, b, i) * gn(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q));
        h(a, b, q) = v;
      }
  if (gauge) {
    Vector sk(static_cast<Eigen::Index>(k));
    if (s_kappa) {
      if (s_kappa->size() != static_cast<Eigen::Index>(k)) throw UnsupportedShapeError("s_kappa has the wrong length");
      sk = *s_kappa;
    } else {
      for (std::size_t q = 0; q < k; ++q) {
        double v = 0.0;
        for (std::size_t a = 0; a < m; ++a)
          for (std::size_t b = 0; b < m; ++b) v += h(a, b, q) * lg.ginv(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        sk(static_cast<Eigen::Index>(q)) = v / static_cast<double>(m);
      }
    }
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t q = 0; q < k; ++q)
          h(a, b, q) -= lg.g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * sk(static_cast<Eigen::Index>(q));
  }
  const Matrix gninv = invert(lg.normal_metric);
  Matrix low = Matrix::Zero(mi, mi);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      double v = 0.0;
      for (std::size_t c = 0; c < m; ++c)
        for (std::size_t d = 0; d < m; ++d)
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t q = 0; q < k; ++q)
              v += h(a, c, p) * h(b, d, q) * lg.ginv(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) *
                   gninv(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q));
      low(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
    }
  out.h_sq = lg.ginv * low * lg.ginv;
  return out;
}

/// g^ab + (1/n) { (1/2) ('Gamma)^2 + ('H)^2 }^ab for the MLE ancillary.
/// Without a gauge this is the nonsequential asymptotic lower bound.
inline Matrix asymptotic_covariance(const CurvedFamily& fam, const Point& u0, double effective_n,
                                    const std::optional<Gauge>& gauge = {}) {
  if (!(effective_n > 0.0)) throw ParameterError("effective sample size must be positive");
  const LocalGeometry lg = local_geometry(fam, u0);
  const SecondOrderTerms t = second_order_terms(fam, u0, gauge);
  return lg.ginv + (0.5 * t.gamma_sq + t.h_sq) / effective_n;
}

/// Unit-time Cramer-Rao bound g^ab(u0) in the u chart.
inline Matrix crb(const CurvedFamily& fam, const Point& u0) { return local_geometry(fam, u0).ginv; }

/// Unit-time Cramer-Rao bound in the ubar chart: J g^{-1} J', J = d ubar / d u.
inline Matrix crb_ubar(const CurvedFamily& fam, const QuadricGauge& q, const Point& u0) {
  const Matrix c = q.coords.jacobian(u0.coords);  // c(a, abar)
  Eigen::FullPivLU<Matrix> lu(c);
  if (!lu.isInvertible()) throw ChartError("ubar map has a singular Jacobian at u0");
  return c.transpose() * local_geometry(fam, u0).ginv * c;
}

/// MLE, its bias-corrected version and its ubar image.
inline EstimateBundle estimate_bundle(const CurvedFamily& fam, const QuadricGauge& q, const Point& u_hat,
                                      double effective_n, const std::optional<Gauge>& gauge = {}) {
  EstimateBundle b;
  b.u_hat = u_hat.coords;
  b.u_hat_star = bias_correct(fam, u_hat, effective_n, gauge).coords;
  b.u_bar_hat = q.coords.map(u_hat.coords);
  return b;
}

}  // namespace confgeom
