#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pwsp/error.hpp"

namespace pwsp {

/// Sample mean, standard deviation and standard error, accumulated in
/// index order so serial and parallel runs agree bit for bit.
struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double std_err = 0.0;
  std::size_t count = 0;
};

inline Summary summarize(const std::vector<double>& v) {
  require(v.size() >= 2, ErrorKind::Parameter, "a standard error needs at least two trials");
  Summary s;
  s.count = v.size();
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  s.std_err = s.sd / std::sqrt(static_cast<double>(v.size()));
  return s;
}

/// Linear-interpolation quantile (the usual "type 7" definition).
inline double quantile(std::vector<double> v, double q) {
  require(!v.empty(), ErrorKind::Parameter, "quantile of an empty sample");
  require(q >= 0.0 && q <= 1.0, ErrorKind::Parameter, "quantile level must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_std_err = 0.0;
  double intercept_std_err = 0.0;
};

/// Ordinary least squares y = a + b x with classical standard errors.
inline LinearFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), ErrorKind::Parameter, "regression inputs differ in length");
  require(x.size() >= 3, ErrorKind::Parameter, "regression needs at least three points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  require(sxx > 0.0, ErrorKind::Parameter, "regression needs at least two distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    rss += r * r;
  }
  const double s2 = rss / (n - 2.0);
  f.slope_std_err = std::sqrt(s2 / sxx);
  f.intercept_std_err = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
  return f;
}

/// Weighted least squares with weights 1/sigma_i^2; standard errors come
/// from the weights alone (known measurement errors).
inline LinearFit wls(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigma) {
  require(x.size() == y.size() && y.size() == sigma.size(), ErrorKind::Parameter, "regression inputs differ in length");
  require(x.size() >= 2, ErrorKind::Parameter, "regression needs at least two points");
  double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(sigma[i] > 0.0 && std::isfinite(sigma[i]), ErrorKind::Parameter, "weights need positive finite errors");
    const double w = 1.0 / (sigma[i] * sigma[i]);
    sw += w;
    swx += w * x[i];
    swy += w * y[i];
    swxx += w * x[i] * x[i];
    swxy += w * x[i] * y[i];
  }
  const double det = sw * swxx - swx * swx;
  require(det > 0.0, ErrorKind::Parameter, "regression needs at least two distinct x values");
  LinearFit f;
  f.slope = (sw * swxy - swx * swy) / det;
  f.intercept = (swxx * swy - swx * swxy) / det;
  f.slope_std_err = std::sqrt(sw / det);
  f.intercept_std_err = std::sqrt(swxx / det);
  return f;
}

}  // namespace pwsp
