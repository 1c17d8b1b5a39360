#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "confgeom/errors.hpp"

namespace confgeom {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Coordinate systems used throughout: natural (theta), expectation (eta),
/// curved-family (u), tubular (w) and conformal (ubar).
enum class Chart : std::uint8_t { Theta, Eta, U, W, UBar };

constexpr std::string_view to_string(Chart c) {
  switch (c) {
    case Chart::Theta: return "theta";
    case Chart::Eta: return "eta";
    case Chart::U: return "u";
    case Chart::W: return "w";
    case Chart::UBar: return "ubar";
  }
  return "?";
}

struct Point {
  Vector coords;
  Chart chart = Chart::Theta;

  Point() = default;
  Point(Vector c, Chart ch) : coords(std::move(c)), chart(ch) {
    if (!coords.allFinite()) throw EvaluationDomainError("point has non-finite coordinates");
  }

  std::size_t dim() const { return static_cast<std::size_t>(coords.size()); }
};

inline Vector make_vector(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

enum class Variance : std::uint8_t { Covariant, Contravariant };

/// Dense tensor of order 0..4 evaluated at one point. Row-major storage;
/// every slot carries its own dimension and variance.
class TensorField {
 public:
  static constexpr std::size_t kMaxOrder = 4;

  TensorField() : values_(1, 0.0) {}

  TensorField(std::vector<std::size_t> dims, std::vector<Variance> variance)
      : dims_(std::move(dims)), variance_(std::move(variance)) {
    if (dims_.size() > kMaxOrder) throw UnsupportedShapeError("tensor order above 4");
    if (dims_.size() != variance_.size())
      throw UnsupportedShapeError("variance flags do not match tensor order");
    const std::size_t n =
        std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
    values_.assign(n, 0.0);
  }

  /// All-covariant tensor with every slot of dimension `dim`.
  static TensorField covariant(std::size_t order, std::size_t dim) {
    return TensorField(std::vector<std::size_t>(order, dim),
                       std::vector<Variance>(order, Variance::Covariant));
  }

  static TensorField from_matrix(const Matrix& m, Variance a = Variance::Covariant,
                                 Variance b = Variance::Covariant) {
    TensorField t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, {a, b});
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) t(i, j) = m(i, j);
    return t;
  }

  static TensorField from_vector(const Vector& v, Variance a = Variance::Covariant) {
    TensorField t({static_cast<std::size_t>(v.size())}, {a});
    for (Eigen::Index i = 0; i < v.size(); ++i) t(i) = v(i);
    return t;
  }

  std::size_t order() const { return dims_.size(); }
  std::size_t dim(std::size_t slot) const { return dims_.at(slot); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  Variance variance(std::size_t slot) const { return variance_.at(slot); }
  const std::vector<Variance>& variances() const { return variance_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  template <class... I>
  double& operator()(I... idx) {
    return values_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <class... I>
  double operator()(I... idx) const {
    return values_[offset({static_cast<std::size_t>(idx)...})];
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  Matrix to_matrix() const {
    if (order() != 2) throw UnsupportedShapeError("to_matrix needs an order-2 tensor");
    Matrix m(static_cast<Eigen::Index>(dims_[0]), static_cast<Eigen::Index>(dims_[1]));
    for (std::size_t i = 0; i < dims_[0]; ++i)
      for (std::size_t j = 0; j < dims_[1]; ++j) m(i, j) = (*this)(i, j);
    return m;
  }

  Vector to_vector() const {
    if (order() != 1) throw UnsupportedShapeError("to_vector needs an order-1 tensor");
    return Eigen::Map<const Vector>(values_.data(), static_cast<Eigen::Index>(values_.size()));
  }

  /// Tensor with slots reordered: result(i_perm[0], ...) = this(i_0, ...), i.e.
  /// slot s of the result is slot perm[s] of this tensor.
  TensorField permuted(std::span<const std::size_t> perm) const {
    if (perm.size() != order()) throw UnsupportedShapeError("permutation length mismatch");
    std::vector<std::size_t> nd(order());
    std::vector<Variance> nv(order());
    for (std::size_t s = 0; s < order(); ++s) {
      nd[s] = dims_[perm[s]];
      nv[s] = variance_[perm[s]];
    }
    TensorField out(nd, nv);
    std::array<std::size_t, kMaxOrder> src{};
    std::array<std::size_t, kMaxOrder> dst{};
    for (std::size_t flat = 0; flat < values_.size(); ++flat) {
      unflatten(flat, src);
      for (std::size_t s = 0; s < order(); ++s) dst[s] = src[perm[s]];
      out.values_[out.flatten(dst)] = values_[flat];
    }
    return out;
  }

  TensorField permuted(std::initializer_list<std::size_t> perm) const {
    return permuted(std::span<const std::size_t>(perm.begin(), perm.size()));
  }

  /// Average over all slot permutations. Requires equal slot dimensions.
  TensorField symmetrized() const {
    std::vector<std::size_t> perm(order());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    TensorField acc(dims_, variance_);
    std::size_t count = 0;
    do {
      acc += permuted(perm);
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    acc *= 1.0 / static_cast<double>(count);
    return acc;
  }

  /// Contract slot `a` of this tensor with slot `b` of `other`. The two slots must
  /// have opposite variance; the result keeps the remaining slots of this tensor
  /// followed by the remaining slots of `other`.
  TensorField contract(const TensorField& other, std::size_t a, std::size_t b) const {
    if (variance_.at(a) == other.variance_.at(b))
      throw UnsupportedShapeError("contraction must pair a covariant with a contravariant slot");
    if (dims_[a] != other.dims_[b]) throw UnsupportedShapeError("contracted slot dimensions differ");
    std::vector<std::size_t> nd;
    std::vector<Variance> nv;
    for (std::size_t s = 0; s < order(); ++s)
      if (s != a) nd.push_back(dims_[s]), nv.push_back(variance_[s]);
    for (std::size_t s = 0; s < other.order(); ++s)
      if (s != b) nd.push_back(other.dims_[s]), nv.push_back(other.variance_[s]);
    TensorField out(nd, nv);
    std::array<std::size_t, kMaxOrder> ia{};
    std::array<std::size_t, kMaxOrder> ib{};
    std::array<std::size_t, kMaxOrder> io{};
    for (std::size_t fa = 0; fa < values_.size(); ++fa) {
      unflatten(fa, ia);
      for (std::size_t fb = 0; fb < other.values_.size(); ++fb) {
        other.unflatten(fb, ib);
        if (ia[a] != ib[b]) continue;
        std::size_t k = 0;
        for (std::size_t s = 0; s < order(); ++s)
          if (s != a) io[k++] = ia[s];
        for (std::size_t s = 0; s < other.order(); ++s)
          if (s != b) io[k++] = ib[s];
        out.values_[out.flatten(io)] += values_[fa] * other.values_[fb];
      }
    }
    return out;
  }

  TensorField& operator+=(const TensorField& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  TensorField& operator-=(const TensorField& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  TensorField& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }

  friend TensorField operator+(TensorField a, const TensorField& b) { return a += b; }
  friend TensorField operator-(TensorField a, const TensorField& b) { return a -= b; }
  friend TensorField operator*(TensorField a, double s) { return a *= s; }
  friend TensorField operator*(double s, TensorField a) { return a *= s; }

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0;
    std::size_t s = 0;
    for (std::size_t i : idx) off = off * dims_[s++] + i;
    return off;
  }

  std::size_t flatten(const std::array<std::size_t, kMaxOrder>& idx) const {
    std::size_t off = 0;
    for (std::size_t s = 0; s < order(); ++s) off = off * dims_[s] + idx[s];
    return off;
  }

  void unflatten(std::size_t flat, std::array<std::size_t, kMaxOrder>& idx) const {
    for (std::size_t s = order(); s-- > 0;) {
      idx[s] = flat % dims_[s];
      flat /= dims_[s];
    }
  }

  void check_same_shape(const TensorField& o) const {
    if (dims_ != o.dims_) throw UnsupportedShapeError("tensor shapes differ");
  }

  std::vector<std::size_t> dims_;
  std::vector<Variance> variance_;
  std::vector<double> values_;
};

inline double max_abs_diff(const TensorField& a, const TensorField& b) {
  if (a.dims() != b.dims()) throw UnsupportedShapeError("tensor shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace confgeom
