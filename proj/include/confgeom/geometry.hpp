#pragma once

// Curved exponential families: frames, induced metric, sub-connections,
// Euler-Schouten curvatures, Gauss equation and structural classification.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "confgeom/errors.hpp"
#include "confgeom/expfam.hpp"
#include "confgeom/tensor.hpp"
#include "confgeom/tensorops.hpp"

namespace confgeom {

struct CurvedFamily {
  ExponentialFamily ambient;
  std::size_t m = 0;
  std::string name;
  VectorField embed_theta;
  VectorField embed_eta;  // optional; defaults to the ambient gradient at theta(u)
  // Optional closed-form frames. tangent_* are m x n with rows indexed by u^a;
  // dtangent_*(a, b, i) = d_a of row b.
  MatrixField tangent_theta;
  MatrixField tangent_eta;
  TensorValuedField dtangent_theta;
  TensorValuedField dtangent_eta;
  MatrixField normal_theta;  // (n - m) x n, already normalized
  std::function<void(const Vector&)> check_chart;  // throws ChartError off the chart

  std::size_t n() const { return ambient.n; }
  std::size_t codim() const { return ambient.n - m; }
  bool hypersurface() const { return ambient.n == m + 1; }
  bool analytic_frames() const { return static_cast<bool>(tangent_theta) && static_cast<bool>(dtangent_theta); }

  void require_chart(const Vector& u) const {
    if (static_cast<std::size_t>(u.size()) != m)
      throw UnsupportedShapeError("u has dimension " + std::to_string(u.size()) + ", expected " +
                                  std::to_string(m));
    if (!u.allFinite()) throw ChartError("u is not finite");
    if (check_chart) check_chart(u);
  }

  Vector theta(const Vector& u) const {
    require_chart(u);
    return embed_theta(u);
  }

  Vector eta(const Vector& u) const {
    require_chart(u);
    return embed_eta ? embed_eta(u) : ambient.grad(embed_theta(u));
  }
};

struct Frame {
  Matrix tangent_theta;  // B_a^i
  Matrix tangent_eta;    // B_ai
  Matrix normal_theta;   // B_kappa^i
  Matrix normal_eta;     // B_kappa i
};

/// Everything the curved-family formulas need at one point of the u chart.
struct LocalGeometry {
  Vector u;
  Vector theta;
  Vector eta;
  Matrix ambient_metric;  // g_ij at theta(u)
  Frame frame;
  TensorField dtangent_theta;  // d_a B_b^i
  TensorField dtangent_eta;    // d_a B_bi
  Matrix g;                    // g_ab
  Matrix ginv;                 // g^ab
  // Ambient Fisher metric restricted to the theta-side normal rows. It equals
  // the identity only when the eta-side rows are the metric duals of the
  // theta-side rows.
  Matrix normal_metric;
};

namespace detail {

inline Matrix tangent_theta_at(const CurvedFamily& fam, const Vector& u) {
  if (fam.tangent_theta) return fam.tangent_theta(u);
  return jacobian([&fam](const Vector& x) { return fam.embed_theta(x); }, u).transpose();
}

inline TensorField dtangent_theta_at(const CurvedFamily& fam, const Vector& u) {
  if (fam.dtangent_theta) return fam.dtangent_theta(u);
  const std::size_t m = fam.m;
  const std::size_t n = fam.n();
  TensorField out({m, m, n}, {Variance::Covariant, Variance::Covariant, Variance::Contravariant});
  if (fam.tangent_theta) {
    const TensorField d = derivative([&fam](const Vector& x) { return TensorField::from_matrix(fam.tangent_theta(x)); }, u);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t i = 0; i < n; ++i) out(a, b, i) = 0.5 * (d(a, b, i) + d(b, a, i));
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const TensorField h = differentiate([&fam, ii](const Vector& x) { return fam.embed_theta(x)(ii); },
                                        Point(u, Chart::U), 2);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) out(a, b, i) = h(a, b);
  }
  return out;
}

/// Orientation of one normal row pair: the eta-side row has a nonnegative
/// Euclidean inner product with eta(u); ties fall back to the first nonzero
/// theta component being positive.
inline double normal_orientation(const Vector& nt, const Vector& ne, const Vector& eta) {
  const double s = ne.dot(eta);
  if (std::abs(s) > 1e-12 * ne.norm() * std::max(1.0, eta.norm())) return s > 0.0 ? 1.0 : -1.0;
  for (Eigen::Index i = 0; i < nt.size(); ++i)
    if (std::abs(nt(i)) > 1e-12 * nt.norm()) return nt(i) > 0.0 ? 1.0 : -1.0;
  return 1.0;
}

}  // namespace detail

inline LocalGeometry local_geometry(const CurvedFamily& fam, const Point& at) {
  if (at.chart != Chart::U) throw ChartError("curved-family quantities are evaluated in the u chart");
  const Vector& u = at.coords;
  fam.require_chart(u);
  const std::size_t m = fam.m;
  const std::size_t n = fam.n();
  if (m == 0 || m > n) throw UnsupportedShapeError("curved family dimension must satisfy 0 < m <= n");

  LocalGeometry lg;
  lg.u = u;
  lg.theta = fam.embed_theta(u);
  lg.eta = fam.eta(u);
  lg.ambient_metric = fam.ambient.hess(lg.theta);

  Frame& fr = lg.frame;
  fr.tangent_theta = detail::tangent_theta_at(fam, u);
  Eigen::FullPivLU<Matrix> lu(fr.tangent_theta);
  lu.setThreshold(1e-10);
  if (static_cast<std::size_t>(lu.rank()) < m) throw ChartError("embedding Jacobian is rank deficient at u");
  fr.tangent_eta = fam.tangent_eta ? fam.tangent_eta(u) : Matrix(fr.tangent_theta * lg.ambient_metric);

  lg.dtangent_theta = detail::dtangent_theta_at(fam, u);
  if (fam.dtangent_eta) {
    lg.dtangent_eta = fam.dtangent_eta(u);
  } else {
    // d_a B_bi = T_ijk B_a^k B_b^j + g_ij d_a B_b^j
    const TensorField t = fam.ambient.third_derivative(lg.theta);
    lg.dtangent_eta = TensorField({m, m, n}, {Variance::Covariant, Variance::Covariant, Variance::Covariant});
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t i = 0; i < n; ++i) {
          double v = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            v += lg.ambient_metric(i, j) * lg.dtangent_theta(a, b, j);
            for (std::size_t k = 0; k < n; ++k)
              v += t(i, j, k) * fr.tangent_theta(a, k) * fr.tangent_theta(b, j);
          }
          lg.dtangent_eta(a, b, i) = v;
        }
  }

  const std::size_t k = n - m;
  if (k > 0) {
    // The theta-side normal solves B_kappa^i B_ai = 0 and the eta-side normal
    // solves B_kappa i B_a^i = 0. The pair is made biorthonormal,
    // B_kappa^i B_lambda i = delta, and each row pair is balanced to equal
    // Euclidean length.
    auto null_rows = [k](const Matrix& a) {
      Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
      return Matrix(svd.matrixV().rightCols(static_cast<Eigen::Index>(k)).transpose());
    };
    fr.normal_theta = fam.normal_theta ? fam.normal_theta(u) : null_rows(fr.tangent_eta);
    Matrix ne = null_rows(fr.tangent_theta);
    const Matrix cross = fr.normal_theta * ne.transpose();
    Eigen::FullPivLU<Matrix> clu(cross);
    if (!clu.isInvertible()) throw ChartError("theta and eta normal spaces are degenerate");
    fr.normal_eta = clu.inverse().transpose() * ne;
    if (!fam.normal_theta) {
      for (Eigen::Index row = 0; row < fr.normal_theta.rows(); ++row) {
        const double c = std::sqrt(fr.normal_eta.row(row).norm() / fr.normal_theta.row(row).norm());
        fr.normal_theta.row(row) *= c;
        fr.normal_eta.row(row) /= c;
        const double s = detail::normal_orientation(fr.normal_theta.row(row).transpose(),
                                                    fr.normal_eta.row(row).transpose(), lg.eta);
        fr.normal_theta.row(row) *= s;
        fr.normal_eta.row(row) *= s;
      }
    }
    lg.normal_metric = fr.normal_theta * lg.ambient_metric * fr.normal_theta.transpose();
  } else {
    fr.normal_theta = Matrix(0, static_cast<Eigen::Index>(n));
    fr.normal_eta = Matrix(0, static_cast<Eigen::Index>(n));
    lg.normal_metric = Matrix(0, 0);
  }

  const Matrix g = fr.tangent_theta * fr.tangent_eta.transpose();
  lg.g = 0.5 * (g + g.transpose());
  try {
    lg.ginv = invert(lg.g);
  } catch (const SingularMetricError& e) {
    throw ChartError(std::string("induced metric is singular: ") + e.what());
  }
  return lg;
}

inline Frame frame_at(const CurvedFamily& fam, const Point& u) { return local_geometry(fam, u).frame; }

inline TensorField induced_metric(const CurvedFamily& fam, const Point& u) {
  return TensorField::from_matrix(local_geometry(fam, u).g);
}

struct ConnectionPair {
  TensorField e;  // Gamma^(1)_abc
  TensorField m;  // Gamma^(-1)_abc
};

inline ConnectionPair sub_connections(const LocalGeometry& lg) {
  const std::size_t m = static_cast<std::size_t>(lg.g.rows());
  const std::size_t n = static_cast<std::size_t>(lg.theta.size());
  ConnectionPair out{TensorField::covariant(3, m), TensorField::covariant(3, m)};
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t c = 0; c < m; ++c) {
        double e = 0.0;
        double mm = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          e += lg.dtangent_theta(a, b, j) * lg.frame.tangent_eta(c, j);
          mm += lg.dtangent_eta(a, b, j) * lg.frame.tangent_theta(c, j);
        }
        out.e(a, b, c) = e;
        out.m(a, b, c) = mm;
      }
  return out;
}

inline ConnectionPair sub_connections(const CurvedFamily& fam, const Point& u) {
  return sub_connections(local_geometry(fam, u));
}

struct EsCurvature {
  TensorField h1;   // H^(1)_{ab kappa}
  TensorField hm1;  // H^(-1)_{ab kappa}
};

inline EsCurvature es_curvature(const LocalGeometry& lg) {
  const std::size_t m = static_cast<std::size_t>(lg.g.rows());
  const std::size_t n = static_cast<std::size_t>(lg.theta.size());
  const std::size_t k = n - m;
  const std::vector<Variance> cov(3, Variance::Covariant);
  EsCurvature out{TensorField({m, m, k}, cov), TensorField({m, m, k}, cov)};
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t q = 0; q < k; ++q) {
        double h1 = 0.0;
        double hm1 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          h1 += lg.dtangent_theta(a, b, j) * lg.frame.normal_eta(q, j);
          hm1 += lg.dtangent_eta(a, b, j) * lg.frame.normal_theta(q, j);
        }
        out.h1(a, b, q) = h1;
        out.hm1(a, b, q) = hm1;
      }
  return out;
}

inline EsCurvature es_curvature(const CurvedFamily& fam, const Point& u) {
  return es_curvature(local_geometry(fam, u));
}

struct CurvaturePair {
  TensorField r1;   // R^(1)_abcd
  TensorField rm1;  // R^(-1)_abcd
};

/// Curvatures from the Gauss equation with the normal metric g_{kappa lambda} = identity.
inline CurvaturePair gauss_curvature(const EsCurvature& h, std::size_t m) {
  const std::size_t k = h.h1.order() == 3 ? h.h1.dim(2) : 0;
  CurvaturePair out{TensorField::covariant(4, m), TensorField::covariant(4, m)};
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t c = 0; c < m; ++c)
        for (std::size_t d = 0; d < m; ++d) {
          double r1 = 0.0;
          double rm1 = 0.0;
          for (std::size_t q = 0; q < k; ++q) {
            r1 += h.hm1(a, d, q) * h.h1(b, c, q) - h.hm1(b, d, q) * h.h1(a, c, q);
            rm1 += h.h1(a, d, q) * h.hm1(b, c, q) - h.h1(b, d, q) * h.hm1(a, c, q);
          }
          out.r1(a, b, c, d) = r1;
          out.rm1(a, b, c, d) = rm1;
        }
  return out;
}

inline CurvaturePair gauss_curvature(const CurvedFamily& fam, const Point& u) {
  return gauss_curvature(es_curvature(fam, u), fam.m);
}

/// T_{a kappa kappa} = T_ijk B_a^i B_kappa^j B_kappa^k, one entry per (a, kappa), a-major.
inline Vector t_akk(const CurvedFamily& fam, const Point& u) {
  const LocalGeometry lg = local_geometry(fam, u);
  const TensorField t = fam.ambient.third_derivative(lg.theta);
  const std::size_t m = fam.m;
  const std::size_t n = fam.n();
  const std::size_t k = fam.codim();
  Vector out = Vector::Zero(static_cast<Eigen::Index>(m * k));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t q = 0; q < k; ++q) {
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t l = 0; l < n; ++l)
            v += t(i, j, l) * lg.frame.tangent_theta(a, i) * lg.frame.normal_theta(q, j) *
                 lg.frame.normal_theta(q, l);
      out(static_cast<Eigen::Index>(a * k + q)) = v;
    }
  return out;
}

/// The u chart as a statistical manifold with the induced +-1-connections.
inline StatisticalChart as_chart(const CurvedFamily& fam) {
  StatisticalChart c;
  c.dim = fam.m;
  c.chart = Chart::U;
  c.metric = [fam](const Vector& u) { return local_geometry(fam, Point(u, Chart::U)).g; };
  c.e_connection = [fam](const Vector& u) { return sub_connections(fam, Point(u, Chart::U)).e; };
  c.m_connection = [fam](const Vector& u) { return sub_connections(fam, Point(u, Chart::U)).m; };
  return c;
}

struct Classification {
  struct Flagged {
    bool flag = false;
    double residual = 0.0;
  };
  Flagged umbilic;
  double mean_curvature = 0.0;  // H^(1)_kappa at the first probe point
  Flagged es_symmetric;
  double es_epsilon = 0.0;
  Flagged dual_quadric;
  double k0 = 0.0;
  double l0 = 0.0;
  Vector theta0;
  Vector eta0;
  Flagged constant_curvature;
  double lambda = 0.0;
};

struct ClassifyOptions {
  double tolerance = 1e-6;
  bool dual_quadric = true;
};

namespace detail {

/// Least-squares fit of y ~ k x + b over stacked samples; returns (k, b, max residual).
inline std::tuple<double, Vector, double> fit_affine_scalar(const std::vector<Vector>& xs,
                                                            const std::vector<Vector>& ys) {
  const auto n = xs.front().size();
  const auto rows = static_cast<Eigen::Index>(xs.size()) * n;
  Matrix a = Matrix::Zero(rows, n + 1);
  Vector rhs(rows);
  for (std::size_t p = 0; p < xs.size(); ++p)
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(p) * n + i;
      a(r, 0) = xs[p](i);
      a(r, 1 + i) = 1.0;
      rhs(r) = ys[p](i);
    }
  const Vector sol = a.colPivHouseholderQr().solve(rhs);
  const double resid = (a * sol - rhs).lpNorm<Eigen::Infinity>();
  return {sol(0), sol.tail(n), resid};
}

}  // namespace detail

/// Structural classification of M_c over a probe grid of u points.
inline Classification classify(const CurvedFamily& fam, const std::vector<Vector>& grid,
                               const ClassifyOptions& opt = {}) {
  if (grid.empty()) throw ParameterError("classify needs a nonempty probe grid");
  if (opt.dual_quadric && !fam.hypersurface())
    throw UnsupportedShapeError("dual-quadric test needs a hypersurface (n = m + 1)");
  const std::size_t m = fam.m;
  const std::size_t k = fam.codim();

  std::vector<LocalGeometry> geo;
  std::vector<EsCurvature> es;
  std::vector<CurvaturePair> rc;
  geo.reserve(grid.size());
  for (const Vector& u : grid) {
    geo.push_back(local_geometry(fam, Point(u, Chart::U)));
    es.push_back(es_curvature(geo.back()));
    rc.push_back(gauss_curvature(es.back(), m));
  }

  Classification out;

  // Conjugate symmetry H^(-1) = eps H^(1).
  double num = 0.0;
  double den = 0.0;
  for (const auto& e : es)
    for (std::size_t i = 0; i < e.h1.size(); ++i) {
      num += e.hm1.values()[i] * e.h1.values()[i];
      den += e.h1.values()[i] * e.h1.values()[i];
    }
  out.es_epsilon = den > 0.0 ? num / den : 0.0;
  for (const auto& e : es) out.es_symmetric.residual = std::max(out.es_symmetric.residual, max_abs_diff(e.hm1, e.h1 * out.es_epsilon));
  out.es_symmetric.flag = out.es_symmetric.residual <= opt.tolerance;

  // Total umbilicity H^(1)_{ab kappa} = H_kappa g_ab.
  for (std::size_t p = 0; p < geo.size(); ++p)
    for (std::size_t q = 0; q < k; ++q) {
      double hk = 0.0;
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) hk += es[p].h1(a, b, q) * geo[p].ginv(a, b);
      hk /= static_cast<double>(m);
      if (p == 0 && q == 0) out.mean_curvature = hk;
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          out.umbilic.residual = std::max(out.umbilic.residual, std::abs(es[p].h1(a, b, q) - hk * geo[p].g(a, b)));
    }
  out.umbilic.flag = out.umbilic.residual <= opt.tolerance;

  // Constant curvature R^(-1)_abcd = lambda (g_bc g_ad - g_ac g_bd).
  auto pattern = [m](const Matrix& g) {
    TensorField p = TensorField::covariant(4, m);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t c = 0; c < m; ++c)
          for (std::size_t d = 0; d < m; ++d) p(a, b, c, d) = g(b, c) * g(a, d) - g(a, c) * g(b, d);
    return p;
  };
  num = den = 0.0;
  std::vector<TensorField> pats;
  for (std::size_t p = 0; p < geo.size(); ++p) {
    pats.push_back(pattern(geo[p].g));
    for (std::size_t i = 0; i < pats.back().size(); ++i) {
      num += rc[p].rm1.values()[i] * pats.back().values()[i];
      den += pats.back().values()[i] * pats.back().values()[i];
    }
  }
  out.lambda = den > 0.0 ? num / den : 0.0;
  for (std::size_t p = 0; p < geo.size(); ++p)
    out.constant_curvature.residual =
        std::max(out.constant_curvature.residual, max_abs_diff(rc[p].rm1, pats[p] * out.lambda));
  out.constant_curvature.flag = out.constant_curvature.residual <= opt.tolerance;

  if (opt.dual_quadric) {
    std::vector<Vector> th, et, nt, ne;
    for (const auto& lg : geo) {
      th.push_back(lg.theta);
      et.push_back(lg.eta);
      nt.push_back(lg.frame.normal_theta.row(0).transpose());
      ne.push_back(lg.frame.normal_eta.row(0).transpose());
    }
    auto [k0, b, rk] = detail::fit_affine_scalar(th, nt);
    auto [l0, c, rl] = detail::fit_affine_scalar(et, ne);
    out.k0 = k0;
    out.l0 = l0;
    const double scale = std::max(1.0, std::max(std::abs(k0), std::abs(l0)));
    if (std::abs(k0) > 1e-12 * scale && std::abs(l0) > 1e-12 * scale) {
      out.theta0 = -b / k0;
      out.eta0 = -c / l0;
      double resid = std::max(rk, rl);
      const double target = 1.0 / (k0 * l0);
      for (std::size_t p = 0; p < geo.size(); ++p) {
        const double lhs = (th[p] - out.theta0).dot(et[p] - out.eta0);
        resid = std::max(resid, std::abs(lhs - target) / std::max(1.0, std::abs(target)));
      }
      out.dual_quadric.residual = resid;
      out.dual_quadric.flag = resid <= opt.tolerance;
    } else {
      out.theta0 = Vector::Zero(static_cast<Eigen::Index>(fam.n()));
      out.eta0 = Vector::Zero(static_cast<Eigen::Index>(fam.n()));
      out.dual_quadric.residual = std::numeric_limits<double>::infinity();
      out.dual_quadric.flag = false;
    }
  }
  return out;
}

}  // namespace confgeom
