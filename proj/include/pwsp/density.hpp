#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pwsp/error.hpp"
#include "pwsp/geometry.hpp"

namespace pwsp {

/// Sampling density f with declared bounds 0 < f_m <= f <= f_M.
///
/// The evaluator must be a pure function; the object is immutable and
/// safe to share between threads.
class DensityField {
 public:
  using Evaluator = std::function<double(PointView)>;

  DensityField(Evaluator eval, double inf_bound, double sup_bound, nlohmann::json description = {},
               double normalization_tolerance = 1e-3)
      : eval_(std::make_shared<const Evaluator>(std::move(eval))),
        inf_(inf_bound),
        sup_(sup_bound),
        tol_(normalization_tolerance),
        description_(std::move(description)) {
    require(std::isfinite(inf_) && inf_ > 0.0, ErrorKind::DensitySupport, "density lower bound f_m must be > 0");
    require(std::isfinite(sup_) && sup_ >= inf_, ErrorKind::DensityContract, "density upper bound f_M must be finite and >= f_m");
    require(tol_ > 0.0, ErrorKind::Parameter, "normalization tolerance must be positive");
  }

  double operator()(PointView x) const { return (*eval_)(x); }

  double inf_bound() const noexcept { return inf_; }
  double sup_bound() const noexcept { return sup_; }
  double normalization_tolerance() const noexcept { return tol_; }
  bool is_constant() const noexcept { return inf_ == sup_; }
  const nlohmann::json& description() const noexcept { return description_; }

 private:
  std::shared_ptr<const Evaluator> eval_;
  double inf_;
  double sup_;
  double tol_;
  nlohmann::json description_;
};

/// Gaussian bump exp(-|x - c|^2 / (2 w^2)) with amplitude A, measured with
/// the domain's own displacement (minimum image on a torus).
struct Bump {
  Point center;
  double amplitude = 1.0;
  double width = 0.1;
};

namespace detail {

/// Integral of the unnormalized bump over the domain. The Gaussian factorizes
/// over axes, and each axis integral is a difference of error functions.
inline double bump_integral(const DomainSpec& domain, const Bump& b) {
  const double s = std::sqrt(2.0) * b.width;
  double total = 1.0;
  for (int i = 0; i < domain.dim(); ++i) {
    const double l = domain.side(i);
    const double c = b.center[static_cast<std::size_t>(i)];
    if (domain.is_torus()) {
      total *= b.width * std::sqrt(2.0 * std::numbers::pi) * std::erf(0.5 * l / s);
    } else {
      total *= b.width * std::sqrt(0.5 * std::numbers::pi) * (std::erf((l - c) / s) + std::erf(c / s));
    }
  }
  return total;
}

/// Minimum of the unnormalized bump over the domain (attained at the point
/// farthest from the center).
inline double bump_min(const DomainSpec& domain, const Bump& b) {
  double r2 = 0.0;
  for (int i = 0; i < domain.dim(); ++i) {
    const double l = domain.side(i);
    const double c = b.center[static_cast<std::size_t>(i)];
    const double far = domain.is_torus() ? 0.5 * l : std::max(c, l - c);
    r2 += far * far;
  }
  return std::exp(-r2 / (2.0 * b.width * b.width));
}

}  // namespace detail

inline DensityField uniform_density(const DomainSpec& domain) {
  const double v = 1.0 / domain.volume();
  return DensityField([v](PointView) { return v; }, v, v, nlohmann::json{{"kind", "uniform"}});
}

/// f = (1 + sum_k A_k g_k) / Z on the domain, with Z known in closed form.
/// Declared bounds are exact for a single bump and valid (possibly loose)
/// for several.
inline DensityField bump_mixture_density(const DomainSpec& domain, std::vector<Bump> bumps) {
  require(!bumps.empty(), ErrorKind::Parameter, "bump mixture needs at least one bump");
  double z = domain.volume();
  double hi = 1.0, lo = 1.0;
  for (const auto& b : bumps) {
    require(static_cast<int>(b.center.size()) == domain.dim(), ErrorKind::Parameter, "bump center dimension mismatch");
    domain.require_contains(b.center, "bump center");
    require(std::isfinite(b.width) && b.width > 0.0, ErrorKind::Parameter, "bump width must be positive");
    require(std::isfinite(b.amplitude) && b.amplitude > -1.0, ErrorKind::Parameter, "bump amplitude must exceed -1");
    z += b.amplitude * detail::bump_integral(domain, b);
    const double gmin = detail::bump_min(domain, b);
    if (b.amplitude >= 0.0) {
      hi += b.amplitude;
      lo += b.amplitude * gmin;
    } else {
      hi += b.amplitude * gmin;
      lo += b.amplitude;
    }
  }
  require(lo > 0.0, ErrorKind::DensitySupport, "bump amplitudes drive the density to zero");

  nlohmann::json desc;
  desc["kind"] = bumps.size() == 1 ? "bump" : "mixture";
  for (const auto& b : bumps) {
    desc["bumps"].push_back({{"center", b.center}, {"amplitude", b.amplitude}, {"width", b.width}});
  }

  auto eval = [domain, bumps, z](PointView x) {
    double s = 1.0;
    for (const auto& b : bumps) {
      double r2 = 0.0;
      for (int i = 0; i < domain.dim(); ++i) {
        const double t = domain.displacement(i, b.center[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(i)]);
        r2 += t * t;
      }
      s += b.amplitude * std::exp(-r2 / (2.0 * b.width * b.width));
    }
    return s / z;
  };
  return DensityField(std::move(eval), lo / z, hi / z, std::move(desc));
}

inline DensityField bump_density(const DomainSpec& domain, Point center, double amplitude, double width) {
  return bump_mixture_density(domain, {Bump{std::move(center), amplitude, width}});
}

/// Midpoint-rule integral of f over the domain, `cells` cells per axis.
inline double integrate_density(const DensityField& f, const DomainSpec& domain, int cells) {
  require(cells >= 1, ErrorKind::Parameter, "quadrature needs at least one cell per axis");
  const int d = domain.dim();
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  Point x(static_cast<std::size_t>(d));
  double cell_volume = 1.0;
  for (int i = 0; i < d; ++i) cell_volume *= domain.side(i) / cells;
  double sum = 0.0;
  while (true) {
    for (int i = 0; i < d; ++i) {
      x[static_cast<std::size_t>(i)] = (idx[static_cast<std::size_t>(i)] + 0.5) * domain.side(i) / cells;
    }
    sum += f(x);
    int axis = 0;
    while (axis < d && ++idx[static_cast<std::size_t>(axis)] == cells) {
      idx[static_cast<std::size_t>(axis)] = 0;
      ++axis;
    }
    if (axis == d) break;
  }
  return sum * cell_volume;
}

/// Throws unless the numerical integral of f is 1 within its tolerance.
inline void check_normalized(const DensityField& f, const DomainSpec& domain) {
  const int cells = domain.dim() <= 2 ? 512 : (domain.dim() == 3 ? 64 : 12);
  const double mass = integrate_density(f, domain, cells);
  if (std::abs(mass - 1.0) > f.normalization_tolerance()) {
    fail(ErrorKind::DensityContract, "density integrates to " + std::to_string(mass) + ", not 1");
  }
}

/// Pointwise conformal cost f(x)^((1-p)/d); identically 1 when p = 1.
inline double conformal_cost(const DensityField& f, const ConformalParams& params, PointView x) {
  const double fx = f(x);
  require(fx > 0.0, ErrorKind::DensitySupport, "density must be positive where the conformal cost is evaluated");
  if (params.p() == 1.0) return 1.0;
  return std::pow(fx, params.cost_exponent());
}

}  // namespace pwsp
