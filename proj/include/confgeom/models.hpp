#pragma once

// The von Mises-Fisher and hyperboloid families with their closed-form
// geometry and unit-time samplers, plus small full-family fixtures.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "confgeom/bessel.hpp"
#include "confgeom/conformal.hpp"
#include "confgeom/errors.hpp"
#include "confgeom/expfam.hpp"
#include "confgeom/geometry.hpp"
#include "confgeom/tensor.hpp"

namespace confgeom {

using Rng = std::mt19937_64;

/// Uniform draw on the open interval (0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
}

inline double exponential1(Rng& rng) { return -std::log(uniform01(rng)); }

// ---------------------------------------------------------------------------
// Full-family fixtures

inline ExponentialFamily gaussian_family(std::size_t n) {
  ExponentialFamily f;
  f.n = n;
  f.name = "gaussian";
  f.psi = [](const Vector& th) { return 0.5 * th.squaredNorm(); };
  f.gradient = [](const Vector& th) { return th; };
  f.hessian = [n](const Vector&) {
    return Matrix(Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
  };
  f.third = [n](const Vector&) { return TensorField::covariant(3, n); };
  return f;
}

/// Independent Poisson counts, psi = sum exp(theta^i).
inline ExponentialFamily poisson_family(std::size_t n) {
  ExponentialFamily f;
  f.n = n;
  f.name = "poisson";
  f.psi = [](const Vector& th) { return th.array().exp().sum(); };
  f.gradient = [](const Vector& th) { return Vector(th.array().exp()); };
  f.hessian = [](const Vector& th) { return Matrix(th.array().exp().matrix().asDiagonal()); };
  f.third = [n](const Vector& th) {
    TensorField t = TensorField::covariant(3, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i, i) = std::exp(th(static_cast<Eigen::Index>(i)));
    return t;
  };
  f.theta_guess = [](const Vector& eta) { return Vector(eta.array().max(1e-300).log()); };
  f.domain = [](const Vector&) { return true; };
  return f;
}

/// theta(u) = A u + b inside the Gaussian family.
inline CurvedFamily linear_gaussian_family(const Matrix& a, const Vector& b) {
  CurvedFamily c;
  c.ambient = gaussian_family(static_cast<std::size_t>(a.rows()));
  c.m = static_cast<std::size_t>(a.cols());
  c.name = "linear-gaussian";
  c.embed_theta = [a, b](const Vector& u) { return Vector(a * u + b); };
  c.tangent_theta = [a](const Vector&) { return Matrix(a.transpose()); };
  const std::size_t m = c.m;
  const std::size_t n = c.ambient.n;
  c.dtangent_theta = [m, n](const Vector&) {
    return TensorField({m, m, n}, {Variance::Covariant, Variance::Covariant, Variance::Contravariant});
  };
  return c;
}

// ---------------------------------------------------------------------------
// Angular charts on the sphere and on the hyperboloid

namespace detail {

enum class Factor : std::uint8_t { One, Sin, Cos, Sinh, Cosh };

/// k-th derivative of one trigonometric or hyperbolic factor.
inline double factor_derivative(Factor f, int k, double x) {
  switch (f) {
    case Factor::One: return k == 0 ? 1.0 : 0.0;
    case Factor::Sin: {
      const double v[4] = {std::sin(x), std::cos(x), -std::sin(x), -std::cos(x)};
      return v[k % 4];
    }
    case Factor::Cos: {
      const double v[4] = {std::cos(x), -std::sin(x), -std::cos(x), std::sin(x)};
      return v[k % 4];
    }
    case Factor::Sinh: return k % 2 == 0 ? std::sinh(x) : std::cosh(x);
    case Factor::Cosh: return k % 2 == 0 ? std::cosh(x) : std::sinh(x);
  }
  return 0.0;
}

}  // namespace detail

/// xi(u) on S^m (|xi| = 1) or on H^m (xi*xi = 1, xi^1 > 0). Every component
/// is a product of one-variable factors, so derivatives of any order are exact.
class AngularChart {
 public:
  AngularChart(std::size_t m, bool hyperbolic) : m_(m), hyperbolic_(hyperbolic) {}

  std::size_t m() const { return m_; }
  std::size_t n() const { return m_ + 1; }

  /// Mixed partial derivative of xi^i; counts[c] is the order in u^c.
  double partial(std::size_t i, const Vector& u, const std::vector<int>& counts) const {
    double v = 1.0;
    for (std::size_t c = 0; c < m_; ++c) {
      const detail::Factor f = factor(i, c);
      const int k = counts[c];
      if (f == detail::Factor::One) {
        if (k > 0) return 0.0;
        continue;
      }
      v *= detail::factor_derivative(f, k, u(static_cast<Eigen::Index>(c)));
    }
    return v;
  }

  Vector xi(const Vector& u) const {
    Vector x(static_cast<Eigen::Index>(n()));
    const std::vector<int> zero(m_, 0);
    for (std::size_t i = 0; i < n(); ++i) x(static_cast<Eigen::Index>(i)) = partial(i, u, zero);
    return x;
  }

  /// d(a, i) = d_a xi^i.
  Matrix dxi(const Vector& u) const {
    Matrix d(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(n()));
    for (std::size_t a = 0; a < m_; ++a) {
      std::vector<int> counts(m_, 0);
      counts[a] = 1;
      for (std::size_t i = 0; i < n(); ++i)
        d(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) = partial(i, u, counts);
    }
    return d;
  }

  /// dd(a, b, i) = d_a d_b xi^i.
  TensorField ddxi(const Vector& u) const {
    TensorField t({m_, m_, n()}, {Variance::Covariant, Variance::Covariant, Variance::Contravariant});
    for (std::size_t a = 0; a < m_; ++a)
      for (std::size_t b = 0; b < m_; ++b) {
        std::vector<int> counts(m_, 0);
        ++counts[a];
        ++counts[b];
        for (std::size_t i = 0; i < n(); ++i) t(a, b, i) = partial(i, u, counts);
      }
    return t;
  }

 private:
  // Component i (0-based) carries sin (sinh) of every earlier angle and the
  // cosine (cosh) of angle i; the last component has no cosine.
  detail::Factor factor(std::size_t i, std::size_t c) const {
    using detail::Factor;
    const bool first = c == 0;
    if (c < i) return first && hyperbolic_ ? Factor::Sinh : Factor::Sin;
    if (c == i && i < m_) return first && hyperbolic_ ? Factor::Cosh : Factor::Cos;
    return Factor::One;
  }

  std::size_t m_;
  bool hyperbolic_;
};

// ---------------------------------------------------------------------------
// Radial ambient potentials psi(theta) = F(rho), rho^2 = theta' J theta

namespace detail {

struct RadialDerivs {
  double f0, f1, f2, f3;
};

/// Ambient family with a radial potential. J is the identity (sphere) or
/// diag(1, -1, ..., -1) (hyperboloid).
inline ExponentialFamily radial_family(std::size_t n, bool minkowski, std::string name,
                                       std::function<RadialDerivs(double)> radial) {
  Vector jdiag = Vector::Ones(static_cast<Eigen::Index>(n));
  if (minkowski) jdiag.tail(static_cast<Eigen::Index>(n) - 1).setConstant(-1.0);
  auto rho_of = [jdiag](const Vector& th) { return std::sqrt(th.dot(jdiag.cwiseProduct(th))); };

  ExponentialFamily f;
  f.n = n;
  f.name = std::move(name);
  if (minkowski) {
    f.domain = [jdiag](const Vector& th) { return th(0) < 0.0 && th.dot(jdiag.cwiseProduct(th)) > 0.0; };
  } else {
    f.domain = [](const Vector& th) { return th.squaredNorm() > 0.0; };
  }
  f.psi = [radial, rho_of](const Vector& th) { return radial(rho_of(th)).f0; };
  f.gradient = [radial, rho_of, jdiag](const Vector& th) {
    const double rho = rho_of(th);
    return Vector(radial(rho).f1 / rho * jdiag.cwiseProduct(th));
  };
  f.hessian = [radial, rho_of, jdiag](const Vector& th) {
    const double rho = rho_of(th);
    const RadialDerivs d = radial(rho);
    const Vector q = jdiag.cwiseProduct(th);
    const double g = d.f1 / rho;
    const double h = d.f2 / (rho * rho) - d.f1 / (rho * rho * rho);
    return Matrix(h * q * q.transpose() + Matrix(g * jdiag.asDiagonal()));
  };
  f.third = [radial, rho_of, jdiag, n](const Vector& th) {
    const double rho = rho_of(th);
    const RadialDerivs d = radial(rho);
    const Vector q = jdiag.cwiseProduct(th);
    const double r2 = rho * rho;
    const double h = d.f2 / r2 - d.f1 / (r2 * rho);
    const double hp = d.f3 / r2 - 3.0 * d.f2 / (r2 * rho) + 3.0 * d.f1 / (r2 * r2);
    TensorField t = TensorField::covariant(3, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) {
          const auto ii = static_cast<Eigen::Index>(i);
          const auto jj = static_cast<Eigen::Index>(j);
          const auto kk = static_cast<Eigen::Index>(k);
          double v = hp / rho * q(ii) * q(jj) * q(kk);
          if (i == k) v += h * jdiag(ii) * q(jj);
          if (j == k) v += h * jdiag(jj) * q(ii);
          if (i == j) v += h * jdiag(ii) * q(kk);
          t(i, j, k) = v;
        }
    return t;
  };
  return f;
}

}  // namespace detail

/// Ambient potential of the von Mises-Fisher family on S^m (n = m + 1).
inline ExponentialFamily vmf_ambient(std::size_t m) {
  const double md = static_cast<double>(m);
  const double nu = (md - 1.0) / 2.0;
  auto radial = [md, nu](double rho) {
    const double a = bessel_i_ratio(nu, rho);
    const double a1 = 1.0 - a * a - md / rho * a;
    const double a2 = -2.0 * a * a1 - md * (a1 / rho - a / (rho * rho));
    double f0;
    if (md == 2.0) {
      f0 = std::log(4.0 * std::numbers::pi * std::sinh(rho) / rho);
    } else {
      f0 = (md + 1.0) / 2.0 * std::log(2.0 * std::numbers::pi) + (1.0 - md) / 2.0 * std::log(rho) +
           log_bessel_i(nu, rho);
    }
    return detail::RadialDerivs{f0, a, a1, a2};
  };
  ExponentialFamily f = detail::radial_family(m + 1, false, "vmf-ambient", radial);
  f.theta_guess = [md](const Vector& eta) {
    // Small- and large-concentration interpolation for the inverse of the ratio.
    const double a = std::min(eta.norm(), 1.0 - 1e-12);
    const double rho = a * (md + 1.0 - a * a) / (1.0 - a * a);
    return Vector(rho * eta / eta.norm());
  };
  return f;
}

/// Ambient potential of the hyperboloid family on H^m (n = m + 1).
inline ExponentialFamily hyperboloid_ambient(std::size_t m) {
  const double md = static_cast<double>(m);
  const double nu = (md - 1.0) / 2.0;
  auto radial = [md, nu](double rho) {
    const double b = bessel_k_ratio(nu, rho);
    const double b1 = -1.0 + b * b - md / rho * b;
    const double b2 = 2.0 * b * b1 - md * (b1 / rho - b / (rho * rho));
    double f0;
    if (md == 2.0) {
      // K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}
      f0 = std::log(2.0 * std::numbers::pi) - rho - std::log(rho);
    } else {
      f0 = std::log(2.0) + (md - 1.0) / 2.0 * std::log(2.0 * std::numbers::pi) + (1.0 - md) / 2.0 * std::log(rho) +
           log_bessel_k(nu, rho);
    }
    return detail::RadialDerivs{f0, -b, -b1, -b2};
  };
  ExponentialFamily f = detail::radial_family(m + 1, true, "hyperboloid-ambient", radial);
  const auto n = static_cast<Eigen::Index>(m + 1);
  f.theta_guess = [md, n](const Vector& eta) {
    Vector j = Vector::Ones(n);
    j.tail(n - 1).setConstant(-1.0);
    const double b = std::sqrt(std::max(eta.dot(j.cwiseProduct(eta)), 1e-300));
    const double rho = b > 1.0 ? md / (2.0 * (b - 1.0)) : 1.0;
    return Vector(-rho * j.cwiseProduct(eta) / b);
  };
  return f;
}

// ---------------------------------------------------------------------------
// The two curved families

enum class ModelKind : std::uint8_t { Vmf, Hyperboloid };

constexpr std::string_view to_string(ModelKind k) { return k == ModelKind::Vmf ? "vmf" : "hyperboloid"; }

/// Shared implementation of the sphere and hyperboloid models:
/// theta(u) = r S xi(u), eta(u) = r_dagger xi(u), S = diag(-1, 1, ..., 1) on H^m.
class DirectionalModel {
 public:
  ModelKind kind() const { return kind_; }
  std::string_view name() const { return to_string(kind_); }
  std::size_t m() const { return m_; }
  std::size_t n() const { return m_ + 1; }
  double r() const { return r_; }
  double r_dagger() const { return r_dagger_; }
  bool hyperbolic() const { return kind_ == ModelKind::Hyperboloid; }

  const ExponentialFamily& ambient() const { return ambient_; }

  void check_chart(const Vector& u) const {
    if (static_cast<std::size_t>(u.size()) != m_) throw ChartError("u has the wrong dimension");
    for (std::size_t a = 0; a < m_; ++a) {
      const double x = u(static_cast<Eigen::Index>(a));
      if (!std::isfinite(x)) throw ChartError("u is not finite");
      if (a == 0 && hyperbolic()) continue;
      if (a + 1 < m_) {
        if (x < 0.0 || x > std::numbers::pi) throw ChartError("polar angle outside [0, pi]");
      } else if (x < 0.0 || x >= 2.0 * std::numbers::pi) {
        throw ChartError("azimuth outside [0, 2 pi)");
      }
    }
  }

  Vector xi(const Vector& u) const { return chart_.xi(u); }
  Vector theta(const Vector& u) const { return Vector(r_ * sign_.cwiseProduct(chart_.xi(u))); }
  Vector eta(const Vector& u) const { return Vector(r_dagger_ * chart_.xi(u)); }

  std::pair<Point, Point> embed(const Point& u) const {
    if (u.chart != Chart::U) throw ChartError("embed expects a u-chart point");
    check_chart(u.coords);
    return {Point(theta(u.coords), Chart::Theta), Point(eta(u.coords), Chart::Eta)};
  }

  /// The normal rows tabulated for the model: theta/r (sphere), -theta/r (hyperboloid).
  Matrix normal_theta(const Vector& u) const {
    const double s = hyperbolic() ? -1.0 : 1.0;
    return Matrix((s * theta(u) / r_).transpose());
  }
  Matrix normal_eta(const Vector& u) const { return Matrix((eta(u) / r_dagger_).transpose()); }

  /// g_ab = r r_dagger diag(1, s1^2, s1^2 s2^2, ...) with s1 = sin u1 or sinh u1.
  Matrix metric(const Vector& u) const {
    Matrix g = Matrix::Zero(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_));
    double prod = 1.0;
    for (std::size_t a = 0; a < m_; ++a) {
      g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = r_ * r_dagger_ * prod;
      const double x = u(static_cast<Eigen::Index>(a));
      const double s = a == 0 && hyperbolic() ? std::sinh(x) : std::sin(x);
      prod *= s * s;
    }
    return g;
  }

  /// Curvature constant of the model, +-1/(r r_dagger).
  double curvature_constant() const { return (hyperbolic() ? -1.0 : 1.0) / (r_ * r_dagger_); }

  double stopping_constant() const {
    const double md = static_cast<double>(m_);
    const double lead = hyperbolic() ? -md / (r_ * r_dagger_) : md / (r_ * r_dagger_);
    return -0.5 * (lead - 1.0 / (r_dagger_ * r_dagger_));
  }

  /// nu(u) = 1 / prod |sin u^a| with sinh in place of sin for u^1 on H^m.
  Gauge gauge() const {
    const bool hyp = hyperbolic();
    const std::size_t m = m_;
    auto first = [hyp](double x) { return hyp ? std::sinh(x) : std::sin(x); };
    Gauge g;
    g.dim = m;
    g.chart = Chart::U;
    g.name = std::string(name());
    g.nu = [first, m](const Vector& u) {
      double p = std::abs(first(u(0)));
      for (std::size_t a = 1; a < m; ++a) p *= std::abs(std::sin(u(static_cast<Eigen::Index>(a))));
      return 1.0 / p;
    };
    g.s = [hyp, m](const Vector& u) {
      Vector s(static_cast<Eigen::Index>(m));
      for (std::size_t a = 0; a < m; ++a) {
        const double x = u(static_cast<Eigen::Index>(a));
        s(static_cast<Eigen::Index>(a)) = a == 0 && hyp ? -std::cosh(x) / std::sinh(x) : -std::cos(x) / std::sin(x);
      }
      return s;
    };
    g.ds = [hyp, m](const Vector& u) {
      Matrix d = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
      for (std::size_t a = 0; a < m; ++a) {
        const double x = u(static_cast<Eigen::Index>(a));
        const double s = a == 0 && hyp ? std::sinh(x) : std::sin(x);
        d(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = 1.0 / (s * s);
      }
      return d;
    };
    return g;
  }

  /// The model as a curved family with closed-form frames. With
  /// `tabulated_normals` false the normals are solved numerically by frame_at.
  CurvedFamily curved_family(bool tabulated_normals = true) const {
    CurvedFamily c;
    c.ambient = ambient_;
    c.m = m_;
    c.name = std::string(name());
    const DirectionalModel self = *this;
    c.check_chart = [self](const Vector& u) { self.check_chart(u); };
    c.embed_theta = [self](const Vector& u) { return self.theta(u); };
    c.embed_eta = [self](const Vector& u) { return self.eta(u); };
    c.tangent_theta = [self](const Vector& u) {
      return Matrix(self.r_ * self.chart_.dxi(u) * self.sign_.asDiagonal());
    };
    c.tangent_eta = [self](const Vector& u) { return Matrix(self.r_dagger_ * self.chart_.dxi(u)); };
    c.dtangent_theta = [self](const Vector& u) {
      TensorField t = self.chart_.ddxi(u);
      const std::size_t m = self.m_;
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          for (std::size_t i = 0; i <= m; ++i) t(a, b, i) *= self.r_ * self.sign_(static_cast<Eigen::Index>(i));
      return t;
    };
    c.dtangent_eta = [self](const Vector& u) {
      return self.chart_.ddxi(u) * self.r_dagger_;
    };
    if (tabulated_normals) c.normal_theta = [self](const Vector& u) { return self.normal_theta(u); };
    return c;
  }

  /// Minkowski (hyperboloid) or Euclidean (sphere) norm of a mean vector.
  double mean_norm(const Vector& x) const {
    if (!hyperbolic()) return x.norm();
    const double q = x(0) * x(0) - x.tail(x.size() - 1).squaredNorm();
    return q > 0.0 ? std::sqrt(q) : 0.0;
  }

  /// Closed-form maximum likelihood direction for a sample mean.
  Point mle_direction(const Vector& xbar) const {
    if (static_cast<std::size_t>(xbar.size()) != n()) throw UnsupportedShapeError("mean has the wrong dimension");
    Vector u(static_cast<Eigen::Index>(m_));
    if (!hyperbolic()) {
      const double len = xbar.norm();
      if (!(len > 0.0) || !std::isfinite(len)) throw MleUndefinedError("zero sample mean on the sphere");
      sphere_angles(xbar / len, u, 0);
    } else {
      const double q = xbar(0) * xbar(0) - xbar.tail(xbar.size() - 1).squaredNorm();
      if (!(xbar(0) > 0.0) || !(q > 0.0)) throw MleUndefinedError("sample mean is not timelike and future pointing");
      const Vector x = xbar / std::sqrt(q);
      const Vector spatial = x.tail(x.size() - 1);
      u(0) = std::asinh(spatial.norm());
      if (m_ > 1) {
        const double sn = spatial.norm();
        if (sn > 0.0) {
          sphere_angles(spatial / sn, u, 1);
        } else {
          u.tail(static_cast<Eigen::Index>(m_) - 1).setZero();
        }
      }
    }
    return Point(u, Chart::U);
  }

  /// One unit-time observation at direction u (m = 2 only).
  Vector sample_unit(const Vector& u, Rng& rng) const {
    if (m_ != 2) throw UnsupportedShapeError("samplers are implemented for m = 2");
    const Vector dir = xi(u);
    const double phi = 2.0 * std::numbers::pi * uniform01(rng);
    Vector x(3);
    if (!hyperbolic()) {
      const double v = uniform01(rng);
      const double w = 1.0 + std::log(v + (1.0 - v) * std::exp(-2.0 * r_)) / r_;
      const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
      x << w, s * std::cos(phi), s * std::sin(phi);
      x = rotate_pole_to(dir, x);
      x /= x.norm();
    } else {
      const double ch = 1.0 + exponential1(rng) / r_;
      const double s = std::sqrt(ch * ch - 1.0);
      x << ch, s * std::cos(phi), s * std::sin(phi);
      x = boost_apex_to(dir, x);
      x(0) = std::sqrt(1.0 + x.tail(2).squaredNorm());
    }
    return x;
  }

 protected:
  DirectionalModel(ModelKind kind, std::size_t m, double r)
      : kind_(kind), m_(m), r_(r), chart_(m, kind == ModelKind::Hyperboloid) {
    if (m < 2) throw ParameterError("model dimension must be at least 2");
    if (!(r > 0.0) || !std::isfinite(r)) throw ParameterError("concentration r must be positive");
    const double nu = (static_cast<double>(m) - 1.0) / 2.0;
    sign_ = Vector::Ones(static_cast<Eigen::Index>(m + 1));
    if (hyperbolic()) {
      r_dagger_ = bessel_k_ratio(nu, r);
      sign_(0) = -1.0;
      ambient_ = hyperboloid_ambient(m);
    } else {
      r_dagger_ = bessel_i_ratio(nu, r);
      ambient_ = vmf_ambient(m);
    }
  }

 private:
  // Angles of a unit vector v on S^k written into u starting at `offset`.
  void sphere_angles(const Vector& v, Vector& u, std::size_t offset) const {
    const auto k = v.size() - 1;
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto slot = static_cast<Eigen::Index>(offset) + j;
      if (j + 1 < k) {
        u(slot) = std::atan2(v.tail(k - j).norm(), v(j));
      } else {
        double az = std::atan2(v(j + 1), v(j));
        if (az < 0.0) az += 2.0 * std::numbers::pi;
        if (az >= 2.0 * std::numbers::pi) az = 0.0;
        u(slot) = az;
      }
    }
  }

  // Rotation taking e1 to dir (Rodrigues), applied to x.
  static Vector rotate_pole_to(const Vector& dir, const Vector& x) {
    const Eigen::Vector3d e(1.0, 0.0, 0.0);
    const Eigen::Vector3d d(dir(0), dir(1), dir(2));
    const Eigen::Vector3d v = e.cross(d);
    const double c = e.dot(d);
    Eigen::Matrix3d rot;
    if (c < -1.0 + 1e-14) {
      rot = Eigen::Vector3d(-1.0, -1.0, 1.0).asDiagonal();
    } else {
      Eigen::Matrix3d vx;
      vx << 0.0, -v(2), v(1), v(2), 0.0, -v(0), -v(1), v(0), 0.0;
      rot = Eigen::Matrix3d::Identity() + vx + vx * vx / (1.0 + c);
    }
    return Vector(rot * Eigen::Vector3d(x(0), x(1), x(2)));
  }

  // Lorentz boost taking the apex (1, 0, 0) to dir, applied to x.
  static Vector boost_apex_to(const Vector& dir, const Vector& x) {
    const Eigen::Vector2d sp(dir(1), dir(2));
    const double len = sp.norm();
    if (len == 0.0) return x;
    const double a = std::asinh(len);
    const Eigen::Vector2d nh = sp / len;
    Eigen::Matrix3d l = Eigen::Matrix3d::Identity();
    l(0, 0) = std::cosh(a);
    l.block<1, 2>(0, 1) = std::sinh(a) * nh.transpose();
    l.block<2, 1>(1, 0) = std::sinh(a) * nh;
    l.block<2, 2>(1, 1) += (std::cosh(a) - 1.0) * nh * nh.transpose();
    return Vector(l * Eigen::Vector3d(x(0), x(1), x(2)));
  }

  ModelKind kind_;
  std::size_t m_;
  double r_;
  double r_dagger_ = 0.0;
  AngularChart chart_;
  Vector sign_;
  ExponentialFamily ambient_;
};

class VmfModel : public DirectionalModel {
 public:
  VmfModel(std::size_t m, double r) : DirectionalModel(ModelKind::Vmf, m, r) {}
};

class HyperboloidModel : public DirectionalModel {
 public:
  HyperboloidModel(std::size_t m, double r) : DirectionalModel(ModelKind::Hyperboloid, m, r) {}
};

inline DirectionalModel make_model(ModelKind kind, std::size_t m, double r) {
  if (kind == ModelKind::Vmf) return VmfModel(m, r);
  return HyperboloidModel(m, r);
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "vmf") return ModelKind::Vmf;
  if (s == "hyperboloid") return ModelKind::Hyperboloid;
  throw ParameterError("unknown model '" + s + "' (expected vmf or hyperboloid)");
}

/// Probe grid of u points kept `margin` radians away from the chart
/// singularities. The hyperboloid's first coordinate spans [margin, 1.5].
inline std::vector<Vector> probe_grid(const DirectionalModel& model, std::size_t per_axis, double margin) {
  const std::size_t m = model.m();
  if (per_axis == 0) throw ParameterError("grid density must be positive");
  std::vector<Vector> out;
  std::vector<std::size_t> idx(m, 0);
  auto coord = [&](std::size_t a, std::size_t k) {
    const double t = per_axis == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(per_axis - 1);
    double lo = margin;
    double hi = std::numbers::pi - margin;
    if (a == 0 && model.hyperbolic()) hi = 1.5;
    if (a + 1 == m) hi = 2.0 * std::numbers::pi - margin;
    return lo + t * (hi - lo);
  };
  while (true) {
    Vector u(static_cast<Eigen::Index>(m));
    bool singular = false;
    for (std::size_t a = 0; a < m; ++a) {
      u(static_cast<Eigen::Index>(a)) = coord(a, idx[a]);
      // The azimuth of the last angle is regular except where sin vanishes.
      if (a + 1 == m && std::abs(std::sin(u(static_cast<Eigen::Index>(a)))) < std::sin(margin) * (1.0 - 1e-9))
        singular = true;
    }
    if (!singular) out.push_back(u);
    std::size_t a = 0;
    while (a < m && ++idx[a] == per_axis) idx[a++] = 0;
    if (a == m) break;
  }
  return out;
}

}  // namespace confgeom
