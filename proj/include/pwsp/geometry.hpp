#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pwsp/error.hpp"

namespace pwsp {

using Point = std::vector<double>;
using PointView = std::span<const double>;

enum class DomainKind { EuclideanBox, FlatTorus };

inline const char* to_string(DomainKind k) { return k == DomainKind::EuclideanBox ? "box" : "torus"; }

/// Ambient space: the box [0, L_1] x ... x [0, L_d] or the flat torus
/// obtained by identifying opposite faces of that box.
class DomainSpec {
 public:
  DomainSpec(DomainKind kind, std::vector<double> sides) : kind_(kind), sides_(std::move(sides)) {
    require(sides_.size() >= 2, ErrorKind::Domain, "dimension must be at least 2");
    for (double s : sides_) {
      require(std::isfinite(s) && s > 0.0, ErrorKind::Domain, "side lengths must be positive and finite");
    }
  }

  static DomainSpec box(int d, double side) { return {DomainKind::EuclideanBox, std::vector<double>(checked_dim(d), side)}; }
  static DomainSpec torus(int d, double side) { return {DomainKind::FlatTorus, std::vector<double>(checked_dim(d), side)}; }

  DomainKind kind() const noexcept { return kind_; }
  bool is_torus() const noexcept { return kind_ == DomainKind::FlatTorus; }
  int dim() const noexcept { return static_cast<int>(sides_.size()); }
  double side(int axis) const { return sides_[static_cast<std::size_t>(axis)]; }
  const std::vector<double>& sides() const noexcept { return sides_; }
  double min_side() const { return *std::min_element(sides_.begin(), sides_.end()); }

  double volume() const {
    return std::accumulate(sides_.begin(), sides_.end(), 1.0, std::multiplies<>());
  }

  /// Largest possible base distance between two points of the domain.
  double diameter() const {
    double s = 0.0;
    for (double l : sides_) {
      const double h = is_torus() ? 0.5 * l : l;
      s += h * h;
    }
    return std::sqrt(s);
  }

  bool contains(PointView x) const noexcept {
    if (x.size() != sides_.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x[i] >= 0.0 && x[i] <= sides_[i])) return false;
    }
    return true;
  }

  void require_contains(PointView x, const char* what = "point") const {
    if (x.size() != sides_.size()) {
      fail(ErrorKind::Domain, std::string(what) + " has dimension " + std::to_string(x.size()) +
                                  ", domain has " + std::to_string(sides_.size()));
    }
    if (!contains(x)) fail(ErrorKind::Domain, std::string(what) + " lies outside the domain extent");
  }

  /// True when x is at least margin_fraction * min_side away from every face
  /// of a box. A torus has no boundary, so every interior point qualifies.
  bool respects_margin(PointView x, double margin_fraction = 0.25) const {
    if (!contains(x)) return false;
    if (is_torus()) return true;
    const double m = margin_fraction * min_side();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < m || x[i] > sides_[i] - m) return false;
    }
    return true;
  }

  /// Squared base distance without range checks; the hot path of every engine.
  double distance_sq_unchecked(const double* a, const double* b) const noexcept {
    double s = 0.0;
    const std::size_t d = sides_.size();
    if (kind_ == DomainKind::FlatTorus) {
      for (std::size_t i = 0; i < d; ++i) {
        double t = std::abs(a[i] - b[i]);
        t = std::min(t, sides_[i] - t);
        s += t * t;
      }
    } else {
      for (std::size_t i = 0; i < d; ++i) {
        const double t = a[i] - b[i];
        s += t * t;
      }
    }
    return s;
  }

  /// Per-axis signed displacement from a to b, using the nearest image on a torus.
  double displacement(int axis, double a, double b) const noexcept {
    double t = b - a;
    if (kind_ == DomainKind::FlatTorus) {
      const double l = sides_[static_cast<std::size_t>(axis)];
      if (t > 0.5 * l) t -= l;
      else if (t < -0.5 * l) t += l;
    }
    return t;
  }

  bool operator==(const DomainSpec&) const = default;

 private:
  static std::size_t checked_dim(int d) {
    require(d >= 2, ErrorKind::Domain, "dimension must be at least 2");
    return static_cast<std::size_t>(d);
  }

  DomainKind kind_;
  std::vector<double> sides_;
};

/// dist_1: Euclidean norm on a box, per-axis minimum image on a torus.
inline double base_distance(const DomainSpec& domain, PointView x, PointView y) {
  domain.require_contains(x, "x");
  domain.require_contains(y, "y");
  return std::sqrt(domain.distance_sq_unchecked(x.data(), y.data()));
}

/// Power p and dimension d of the conformal deformation. The exponent
/// alpha = 1/(d + 2p) is always derived, never stored.
class ConformalParams {
 public:
  ConformalParams(double p, int d) : p_(p), d_(d) {
    require(std::isfinite(p) && p >= 1.0, ErrorKind::Parameter, "power p must be >= 1");
    require(d >= 2, ErrorKind::Parameter, "dimension d must be >= 2");
  }

  double p() const noexcept { return p_; }
  int d() const noexcept { return d_; }
  double alpha() const noexcept { return 1.0 / (d_ + 2.0 * p_); }

  /// Exponent (1 - p)/d applied to the density in the conformal cost.
  double cost_exponent() const noexcept { return (1.0 - p_) / d_; }

  /// Short-link threshold (n f_m)^((alpha - 1)/d).
  double link_threshold(double intensity) const { return std::pow(intensity, (alpha() - 1.0) / d_); }

 private:
  double p_;
  int d_;
};

/// Maps a squared base distance to the power-weighted edge cost dist^p.
///
/// Every engine and every oracle computes weights through this one function
/// so that equal paths accumulate bit-identical sums.
class PowerWeight {
 public:
  explicit PowerWeight(double p) : p_(p), half_p_(0.5 * p) {
    require(std::isfinite(p) && p >= 1.0, ErrorKind::Parameter, "power p must be >= 1");
  }

  double p() const noexcept { return p_; }

  double operator()(double dist_sq) const noexcept {
    if (p_ == 2.0) return dist_sq;
    if (p_ == 1.0) return std::sqrt(dist_sq);
    return std::pow(dist_sq, half_p_);
  }

 private:
  double p_;
  double half_p_;
};

inline double power_edge_weight(const DomainSpec& domain, double p, PointView u, PointView v) {
  PowerWeight w(p);
  domain.require_contains(u, "u");
  domain.require_contains(v, "v");
  return w(domain.distance_sq_unchecked(u.data(), v.data()));
}

}  // namespace pwsp
