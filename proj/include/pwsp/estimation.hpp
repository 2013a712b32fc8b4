#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pwsp/density.hpp"
#include "pwsp/error.hpp"
#include "pwsp/geodesic.hpp"
#include "pwsp/geometry.hpp"
#include "pwsp/parallel.hpp"
#include "pwsp/pathengine.hpp"
#include "pwsp/rng.hpp"
#include "pwsp/sampling.hpp"
#include "pwsp/stats.hpp"

namespace pwsp {

enum class Quantity { Cdp, MeanCurvePoint, CardinalitySlope, GWGenMean, TailFreq, ConvergenceRatio, SubadditivityGap };

inline const char* to_string(Quantity q) {
  switch (q) {
    case Quantity::Cdp: return "Cdp";
    case Quantity::MeanCurvePoint: return "MeanCurvePoint";
    case Quantity::CardinalitySlope: return "CardinalitySlope";
    case Quantity::GWGenMean: return "GWGenMean";
    case Quantity::TailFreq: return "TailFreq";
    case Quantity::ConvergenceRatio: return "ConvergenceRatio";
    case Quantity::SubadditivityGap: return "SubadditivityGap";
  }
  return "unknown";
}

/// A Monte-Carlo estimate. std_err is the sample standard deviation over
/// sqrt(trials); params echoes every input needed to reproduce it.
struct EstimateRecord {
  Quantity quantity = Quantity::Cdp;
  double value = 0.0;
  double std_err = 0.0;
  std::size_t trials = 0;
  nlohmann::json params = nlohmann::json::object();
};

inline EstimateRecord make_record(Quantity q, const Summary& s, nlohmann::json params) {
  return {q, s.mean, s.std_err, s.count, std::move(params)};
}

/// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(1.0 + 0.5 * d);
}

namespace detail {

// First coordinate of every stream id, one per estimator.
enum StreamTag : std::uint64_t { kTubeStream = 1, kConvStream, kCardStream, kGwStream, kTailStream, kThetaStream };

inline Error annotate(const Error& e, const std::string& where) { return Error(e.kind(), e.what() + (" at " + where)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Tube estimator

/// Tube radius as a function of segment length: coefficient * t^exponent
/// (power) or coefficient * log(1 + t) (log). Both grow without bound.
struct TubeRadiusRule {
  enum class Kind { Power, Log };
  Kind kind = Kind::Power;
  double coefficient = 1.0;
  double exponent = 0.5;

  double operator()(double t) const {
    return kind == Kind::Power ? coefficient * std::pow(t, exponent) : coefficient * std::log1p(t);
  }

  void validate() const {
    require(std::isfinite(coefficient) && coefficient > 0.0, ErrorKind::Parameter, "tube radius coefficient must be positive");
    if (kind == Kind::Power) {
      require(std::isfinite(exponent) && exponent > 0.0, ErrorKind::Parameter,
              "tube radius exponent must be positive so that b_t grows without bound");
    }
  }

  nlohmann::json to_json() const {
    if (kind == Kind::Log) return {{"rule", "log"}, {"coefficient", coefficient}};
    return {{"rule", "power"}, {"coefficient", coefficient}, {"exponent", exponent}};
  }
};

struct TubeEstimatorConfig {
  int d = 2;
  double p = 2.0;
  std::vector<double> t_schedule;
  TubeRadiusRule b_rule;
  std::size_t trials = 30;
  double lambda = 1.0;
  PathMode mode = PathMode::Pruned;
  int threads = 1;

  void validate() const {
    ConformalParams(p, d);
    require(!t_schedule.empty(), ErrorKind::Parameter, "t schedule is empty");
    for (std::size_t k = 0; k < t_schedule.size(); ++k) {
      require(std::isfinite(t_schedule[k]) && t_schedule[k] > 0.0, ErrorKind::Parameter, "t values must be positive");
      require(k == 0 || t_schedule[k] > t_schedule[k - 1], ErrorKind::Parameter, "t schedule must be strictly increasing");
    }
    b_rule.validate();
    require(trials >= 2, ErrorKind::Parameter, "at least two trials per t are needed for a standard error");
    require(lambda == 1.0, ErrorKind::Parameter, "the tube estimator runs at intensity 1");
  }
};

/// One tube sample: L over the Poisson points in T(u, u + t e_1; b_t).
struct TubeTrial {
  double length = 0.0;
  /// Realized |v - u| in floating point; L/t uses this value.
  double segment = 0.0;
  double first_edge = 0.0;
  double last_edge = 0.0;
  std::size_t points = 0;
  std::size_t cardinality = 0;
};

/// Expected nearest-neighbor distance of a unit-intensity Poisson process.
inline double poisson_nn_spacing(int d, double lambda = 1.0) {
  return std::tgamma(1.0 + 1.0 / d) / std::pow(lambda * unit_ball_volume(d), 1.0 / d);
}

inline TubeTrial run_tube_trial(const TubeEstimatorConfig& cfg, double t, std::uint64_t seed, std::uint64_t role,
                                std::size_t trial) {
  const double b = cfg.b_rule(t);
  const Tube tube = Tube::along_axis(cfg.d, t, b);
  const DomainSpec host = Tube::host_box(cfg.d, t, b);
  const auto stream = stream_id({detail::kTubeStream, role, std::bit_cast<std::uint64_t>(t), trial});
  try {
    const auto cloud = sample_poisson(cfg.lambda, tube, host, seed, stream);
    PathQuery q;
    q.x = tube.u;
    q.y = tube.v;
    q.p = cfg.p;
    q.cloud = &cloud;
    q.mode = cfg.mode;
    q.intensity = cfg.lambda;
    const auto r = shortest_path(q);
    TubeTrial out;
    out.length = r.length;
    out.segment = tube.v[0] - tube.u[0];
    out.first_edge = r.first_edge;
    out.last_edge = r.last_edge;
    out.points = cloud.size();
    out.cardinality = r.cardinality;
    return out;
  } catch (const Error& e) {
    throw detail::annotate(e, "t=" + std::to_string(t) + ", trial " + std::to_string(trial));
  }
}

struct TubeEstimate {
  std::vector<EstimateRecord> curve;
  /// Largest-t mean of L/t.
  EstimateRecord cdp;
  /// Intercept of a fit of the means against 1/t; absent with a single t.
  std::optional<EstimateRecord> extrapolated;
  /// trials[k][i] is trial i at t_schedule[k].
  std::vector<std::vector<TubeTrial>> trials;
};

inline nlohmann::json tube_params(const TubeEstimatorConfig& cfg, double t, std::uint64_t seed) {
  return {{"d", cfg.d},         {"p", cfg.p},       {"lambda", cfg.lambda}, {"t", t},
          {"b", cfg.b_rule(t)}, {"b_rule", cfg.b_rule.to_json()},           {"seed", seed}};
}

/// Mean of L/t over tube samples for each t in the schedule.
inline TubeEstimate estimate_C(const TubeEstimatorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TubeEstimate out;
  const double spacing = poisson_nn_spacing(cfg.d, cfg.lambda);
  std::vector<double> inv_t, means, errs;
  for (double t : cfg.t_schedule) {
    auto rows = parallel_map<TubeTrial>(cfg.trials, cfg.threads,
                                        [&](std::size_t i) { return run_tube_trial(cfg, t, seed, 0, i); });
    std::vector<double> ratio, points, card;
    for (const auto& r : rows) {
      ratio.push_back(r.length / r.segment);
      points.push_back(static_cast<double>(r.points));
      card.push_back(static_cast<double>(r.cardinality));
    }
    auto params = tube_params(cfg, t, seed);
    params["pre_asymptotic"] = t < spacing;
    params["mean_points"] = summarize(points).mean;
    params["mean_cardinality"] = summarize(card).mean;
    out.curve.push_back(make_record(Quantity::MeanCurvePoint, summarize(ratio), std::move(params)));
    inv_t.push_back(1.0 / t);
    means.push_back(out.curve.back().value);
    errs.push_back(out.curve.back().std_err);
    out.trials.push_back(std::move(rows));
  }

  out.cdp = out.curve.back();
  out.cdp.quantity = Quantity::Cdp;
  out.cdp.params["method"] = "largest_t";

  if (cfg.t_schedule.size() >= 2) {
    bool weighted = true;
    for (double e : errs) weighted = weighted && e > 0.0;
    LinearFit fit;
    if (weighted) {
      fit = wls(inv_t, means, errs);
    } else if (inv_t.size() >= 3) {
      fit = ols(inv_t, means);
    } else {
      // two points, no usable errors: the line through them
      fit.slope = (means[1] - means[0]) / (inv_t[1] - inv_t[0]);
      fit.intercept = means[0] - fit.slope * inv_t[0];
    }
    EstimateRecord ex;
    ex.quantity = Quantity::Cdp;
    ex.value = fit.intercept;
    ex.std_err = fit.intercept_std_err;
    ex.trials = cfg.trials * cfg.t_schedule.size();
    ex.params = tube_params(cfg, cfg.t_schedule.back(), seed);
    ex.params["method"] = weighted ? "inverse_t_wls" : "inverse_t_ols";
    ex.params["slope"] = fit.slope;
    ex.params["t_schedule"] = cfg.t_schedule;
    out.cdp.params["extrapolated"] = ex.value;
    out.cdp.params["extrapolated_stderr"] = ex.std_err;
    out.extrapolated = std::move(ex);
  }
  return out;
}

/// Checks m(s + t) <= m(s) + m(t) + (2^(p-1) - 1) E(a + b)^p, where m is the
/// mean tube path length, a the last hop of an s-path and b the first hop of
/// an independent t-path. The s+t and s samples share the streams used by
/// estimate_C; the t samples come from a separate stream family.
///
/// value = mean of the per-trial gap L(s+t) - L(s) - L(t) - correction.
inline EstimateRecord subadditivity_check(const TubeEstimatorConfig& cfg, double s, double t, std::size_t trials,
                                          std::uint64_t seed) {
  require(std::isfinite(s) && s > 0.0 && std::isfinite(t) && t > 0.0, ErrorKind::Parameter,
          "subadditivity needs positive s and t");
  TubeEstimatorConfig c = cfg;
  c.t_schedule = {s + t};
  c.trials = trials;
  c.validate();
  const double factor = std::pow(2.0, cfg.p - 1.0) - 1.0;
  struct Row {
    double whole, left, right, corr;
  };
  auto rows = parallel_map<Row>(trials, cfg.threads, [&](std::size_t i) {
    const auto a = run_tube_trial(c, s + t, seed, 0, i);
    const auto l = run_tube_trial(c, s, seed, 0, i);
    const auto r = run_tube_trial(c, t, seed, 1, i);
    return Row{a.length, l.length, r.length, factor * std::pow(l.last_edge + r.first_edge, cfg.p)};
  });
  std::vector<double> gap, whole, left, right, corr;
  for (const auto& r : rows) {
    gap.push_back(r.whole - r.left - r.right - r.corr);
    whole.push_back(r.whole);
    left.push_back(r.left);
    right.push_back(r.right);
    corr.push_back(r.corr);
  }
  const auto g = summarize(gap);
  const auto w = summarize(whole), l = summarize(left), rr = summarize(right), k = summarize(corr);
  nlohmann::json params{{"d", cfg.d},
                        {"p", cfg.p},
                        {"lambda", cfg.lambda},
                        {"s", s},
                        {"t", t},
                        {"b_s", cfg.b_rule(s)},
                        {"b_t", cfg.b_rule(t)},
                        {"b_st", cfg.b_rule(s + t)},
                        {"b_rule", cfg.b_rule.to_json()},
                        {"seed", seed},
                        {"m_st", w.mean},
                        {"m_st_stderr", w.std_err},
                        {"m_s", l.mean},
                        {"m_s_stderr", l.std_err},
                        {"m_t", rr.mean},
                        {"m_t_stderr", rr.std_err},
                        {"correction", k.mean},
                        {"correction_stderr", k.std_err}};
  // A few ulps of slack so the exactly additive p = 1 case is not decided by rounding.
  const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(w.mean);
  params["holds"] = g.mean <= 3.0 * g.std_err + slack;
  return make_record(Quantity::SubadditivityGap, g, std::move(params));
}

// ---------------------------------------------------------------------------
// Experiments on a fixed domain

struct AnchorPair {
  Point x;
  Point y;
};

struct ExperimentOptions {
  int resolution = 256;
  PathMode mode = PathMode::Pruned;
  int threads = 1;
  double margin_fraction = 0.25;
};

inline void require_anchors(const DomainSpec& domain, const AnchorPair& a, double margin_fraction) {
  domain.require_contains(a.x, "anchor x");
  domain.require_contains(a.y, "anchor y");
  require(domain.respects_margin(a.x, margin_fraction) && domain.respects_margin(a.y, margin_fraction),
          ErrorKind::Domain, "anchors must stay at least the boundary margin away from the box faces");
}

inline PathResult run_anchor_path(const PointCloud& cloud, const AnchorPair& a, double p, PathMode mode) {
  PathQuery q;
  q.x = a.x;
  q.y = a.y;
  q.p = p;
  q.cloud = &cloud;
  q.mode = mode;
  return shortest_path(q);
}

struct ConvergenceTrial {
  std::size_t n = 0;
  std::size_t pair = 0;
  std::size_t trial = 0;
  double length = 0.0;
  double ratio = 0.0;
  std::size_t cardinality = 0;
  double max_edge = 0.0;
  Certificate certificate = Certificate::ExactMode;
};

struct ConvergenceResult {
  /// One record per (n, pair), n-major.
  std::vector<EstimateRecord> records;
  std::vector<ConvergenceTrial> rows;
  std::vector<DistPResult> dist;
};

/// Ratio n^((p-1)/d) L_n(x, y) / dist_p(x, y) for every n, anchor pair and
/// trial. All pairs of one (n, trial) share the same cloud.
inline ConvergenceResult convergence_experiment(const DomainSpec& domain, const DensityField& f,
                                                const ConformalParams& params, const std::vector<std::size_t>& n_schedule,
                                                const std::vector<AnchorPair>& pairs, std::size_t trials,
                                                std::uint64_t seed, const ExperimentOptions& opt = {}) {
  require(params.d() == domain.dim(), ErrorKind::Parameter, "conformal parameters and domain disagree on d");
  require(!n_schedule.empty() && !pairs.empty(), ErrorKind::Parameter, "need at least one n and one anchor pair");
  require(trials >= 2, ErrorKind::Parameter, "at least two trials are needed for a standard error");
  for (const auto& a : pairs) require_anchors(domain, a, opt.margin_fraction);

  ConvergenceResult out;
  for (const auto& a : pairs) out.dist.push_back(dist_p(domain, f, params, a.x, a.y, opt.resolution));

  const std::size_t cells = n_schedule.size() * trials;
  auto per_cell = parallel_map<std::vector<ConvergenceTrial>>(cells, opt.threads, [&](std::size_t c) {
    const std::size_t n = n_schedule[c / trials], trial = c % trials;
    std::vector<ConvergenceTrial> rows;
    try {
      const auto cloud = sample_iid(f, domain, n, seed, stream_id({detail::kConvStream, n, trial}));
      const double scale = std::pow(static_cast<double>(n), (params.p() - 1.0) / params.d());
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto r = run_anchor_path(cloud, pairs[k], params.p(), opt.mode);
        rows.push_back({n, k, trial, r.length, scale * r.length / out.dist[k].value, r.cardinality, r.max_edge,
                        r.certificate});
      }
    } catch (const Error& e) {
      throw detail::annotate(e, "n=" + std::to_string(n) + ", trial " + std::to_string(trial));
    }
    return rows;
  });

  for (std::size_t ni = 0; ni < n_schedule.size(); ++ni) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      std::vector<double> ratios;
      for (std::size_t i = 0; i < trials; ++i) ratios.push_back(per_cell[ni * trials + i][k].ratio);
      const auto s = summarize(ratios);
      nlohmann::json pj{{"d", domain.dim()},
                        {"p", params.p()},
                        {"n", n_schedule[ni]},
                        {"pair", k},
                        {"x", pairs[k].x},
                        {"y", pairs[k].y},
                        {"distance", base_distance(domain, pairs[k].x, pairs[k].y)},
                        {"dist_p", out.dist[k].value},
                        {"dist_p_error", out.dist[k].error_estimate},
                        {"dist_p_refinement_warning", out.dist[k].refinement_warning},
                        {"median", median(ratios)},
                        {"dispersion", s.mean != 0.0 ? s.std_err / s.mean : 0.0},
                        {"domain", to_string(domain.kind())},
                        {"density", f.description()},
                        {"seed", seed}};
      out.records.push_back(make_record(Quantity::ConvergenceRatio, s, std::move(pj)));
    }
  }
  for (auto& cell : per_cell) {
    for (auto& r : cell) out.rows.push_back(r);
  }
  return out;
}

/// #L / ((n f)^(1/d) |x - y|).
inline double normalized_cardinality(std::size_t cardinality, double n, double f, double distance, int d) {
  return static_cast<double>(cardinality) / (std::pow(n * f, 1.0 / d) * distance);
}

struct CardinalityTrial {
  std::size_t n = 0;
  std::size_t trial = 0;
  std::size_t cardinality = 0;
  double normalized = 0.0;
};

struct CardinalityResult {
  /// Slope of normalized cardinality against log10(n) over all trials.
  EstimateRecord slope;
  /// Mean normalized cardinality per n.
  std::vector<EstimateRecord> per_n;
  std::vector<CardinalityTrial> rows;
};

inline CardinalityResult cardinality_scaling(const DomainSpec& domain, const DensityField& f,
                                             const ConformalParams& params, const std::vector<std::size_t>& n_schedule,
                                             const AnchorPair& pair, std::size_t trials, std::uint64_t seed,
                                             const ExperimentOptions& opt = {}) {
  require(f.is_constant(), ErrorKind::Parameter, "cardinality scaling is defined for a uniform density");
  require(params.d() == domain.dim(), ErrorKind::Parameter, "conformal parameters and domain disagree on d");
  require(n_schedule.size() >= 2, ErrorKind::Parameter, "cardinality scaling needs at least two values of n");
  require(trials >= 2, ErrorKind::Parameter, "at least two trials are needed for a standard error");
  require_anchors(domain, pair, opt.margin_fraction);
  const double dist = base_distance(domain, pair.x, pair.y);
  const double fval = f.inf_bound();

  const std::size_t cells = n_schedule.size() * trials;
  auto rows = parallel_map<CardinalityTrial>(cells, opt.threads, [&](std::size_t c) {
    const std::size_t n = n_schedule[c / trials], trial = c % trials;
    try {
      const auto cloud = sample_iid(f, domain, n, seed, stream_id({detail::kCardStream, n, trial}));
      const auto r = run_anchor_path(cloud, pair, params.p(), opt.mode);
      return CardinalityTrial{n, trial, r.cardinality,
                              normalized_cardinality(r.cardinality, static_cast<double>(n), fval, dist, domain.dim())};
    } catch (const Error& e) {
      throw detail::annotate(e, "n=" + std::to_string(n) + ", trial " + std::to_string(trial));
    }
  });

  CardinalityResult out;
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    xs.push_back(std::log10(static_cast<double>(r.n)));
    ys.push_back(r.normalized);
  }
  const auto fit = ols(xs, ys);
  nlohmann::json base{{"d", domain.dim()}, {"p", params.p()}, {"x", pair.x},
                      {"y", pair.y},       {"distance", dist}, {"seed", seed}};
  for (std::size_t ni = 0; ni < n_schedule.size(); ++ni) {
    std::vector<double> v(ys.begin() + static_cast<std::ptrdiff_t>(ni * trials),
                          ys.begin() + static_cast<std::ptrdiff_t>((ni + 1) * trials));
    auto pj = base;
    pj["n"] = n_schedule[ni];
    pj["series"] = "normalized_cardinality";
    pj["max"] = *std::max_element(v.begin(), v.end());
    out.per_n.push_back(make_record(Quantity::MeanCurvePoint, summarize(v), std::move(pj)));
  }
  auto pj = base;
  pj["n_schedule"] = n_schedule;
  pj["intercept"] = fit.intercept;
  pj["c_star_estimate"] = *std::max_element(ys.begin(), ys.end());
  pj["p99"] = quantile(ys, 0.99);
  pj["regressor"] = "log10_n";
  out.slope = {Quantity::CardinalitySlope, fit.slope, fit.slope_std_err, ys.size(), std::move(pj)};
  out.rows = std::move(rows);
  return out;
}

/// Fraction of trials whose path has a link longer than
/// threshold_factor * (n f_m)^((alpha - 1)/d).
inline EstimateRecord link_tail_frequency(const DomainSpec& domain, const DensityField& f, const ConformalParams& params,
                                          std::size_t n, const AnchorPair& pair, double threshold_factor,
                                          std::size_t trials, std::uint64_t seed, const ExperimentOptions& opt = {}) {
  require(params.d() == domain.dim(), ErrorKind::Parameter, "conformal parameters and domain disagree on d");
  require(n >= 1, ErrorKind::Parameter, "link tail frequency needs n >= 1");
  require(threshold_factor > 0.0, ErrorKind::Parameter, "threshold factor must be positive");
  require(trials >= 2, ErrorKind::Parameter, "at least two trials are needed for a standard error");
  require_anchors(domain, pair, opt.margin_fraction);
  auto hits = parallel_map<double>(trials, opt.threads, [&](std::size_t trial) {
    try {
      const auto cloud = sample_iid(f, domain, n, seed, stream_id({detail::kTailStream, n, trial}));
      const auto r = run_anchor_path(cloud, pair, params.p(), opt.mode);
      return path_link_stats(r, params, static_cast<double>(n), f.inf_bound(), threshold_factor).exceeds ? 1.0 : 0.0;
    } catch (const Error& e) {
      throw detail::annotate(e, "trial " + std::to_string(trial));
    }
  });
  nlohmann::json pj{{"d", domain.dim()},
                    {"p", params.p()},
                    {"n", n},
                    {"x", pair.x},
                    {"y", pair.y},
                    {"threshold_factor", threshold_factor},
                    {"threshold", threshold_factor * params.link_threshold(static_cast<double>(n) * f.inf_bound())},
                    {"seed", seed}};
  return make_record(Quantity::TailFreq, summarize(hits), std::move(pj));
}

// ---------------------------------------------------------------------------
// Branching bound

/// (lambda V_d r0^(d/p))^k Gamma(1 + d/p)^k / Gamma(1 + k d/p).
inline double gw_analytic_bound(double lambda, double r0, const ConformalParams& params, int generation) {
  if (r0 == 0.0) return 0.0;
  const double dp = params.d() / params.p();
  const double k = generation;
  return std::exp(k * std::log(lambda * unit_ball_volume(params.d()) * std::pow(r0, dp)) + k * std::lgamma(1.0 + dp) -
                  std::lgamma(1.0 + k * dp));
}

inline constexpr std::size_t kGwPopulationCap = 1000000;

/// Branching exploration: a node with budget r has Poisson(lambda V_d r^(d/p))
/// children uniform in the ball of radius r^(1/p); a child at distance rho
/// inherits budget r - rho^p. Only budgets matter, so positions are not kept.
inline std::vector<EstimateRecord> gw_generation_mean(double lambda, double r0, const ConformalParams& params,
                                                      int n_gen, std::size_t trials, std::uint64_t seed, int threads = 1,
                                                      std::size_t cap = kGwPopulationCap) {
  require(std::isfinite(lambda) && lambda > 0.0, ErrorKind::Parameter, "intensity must be positive");
  require(std::isfinite(r0) && r0 >= 0.0, ErrorKind::Parameter, "initial budget must be nonnegative");
  require(n_gen >= 1, ErrorKind::Parameter, "need at least one generation");
  require(trials >= 2, ErrorKind::Parameter, "at least two trials are needed for a standard error");
  const int d = params.d();
  const double p = params.p();
  const double vd = unit_ball_volume(d);
  auto sizes = parallel_map<std::vector<double>>(trials, threads, [&](std::size_t trial) {
    Philox rng(seed, stream_id({detail::kGwStream, trial}));
    std::vector<double> gen{r0}, next, out;
    for (int g = 1; g <= n_gen; ++g) {
      next.clear();
      for (double r : gen) {
        const auto kids = detail::poisson_count(lambda * vd * std::pow(r, d / p), rng);
        for (std::uint64_t k = 0; k < kids; ++k) {
          const double rho = std::pow(r, 1.0 / p) * std::pow(rng.uniform(), 1.0 / d);
          next.push_back(std::max(0.0, r - std::pow(rho, p)));
        }
        if (next.size() > cap) {
          fail(ErrorKind::Capacity, "branching population exceeds " + std::to_string(cap) + " in generation " +
                                        std::to_string(g) + " (trial " + std::to_string(trial) + ")");
        }
      }
      out.push_back(static_cast<double>(next.size()));
      std::swap(gen, next);
    }
    return out;
  });
  std::vector<EstimateRecord> out;
  for (int g = 1; g <= n_gen; ++g) {
    std::vector<double> v;
    for (const auto& s : sizes) v.push_back(s[static_cast<std::size_t>(g - 1)]);
    const auto s = summarize(v);
    const double bound = gw_analytic_bound(lambda, r0, params, g);
    nlohmann::json pj{{"d", d},
                      {"p", p},
                      {"lambda", lambda},
                      {"r0", r0},
                      {"generation", g},
                      {"analytic_bound", bound},
                      {"seed", seed}};
    out.push_back(make_record(Quantity::GWGenMean, s, std::move(pj)));
  }
  return out;
}

/// Monte-Carlo volume of the domination region
/// {w : |u - w|^p + |w - v|^p < |u - v|^p} for |u - v| = 1. The region lies in
/// the lens B(u, 1) and B(v, 1), hence in [0, 1] x [-1, 1]^(d-1).
inline Summary theta_region_volume(double p, int d, std::size_t samples, std::uint64_t seed) {
  const ConformalParams params(p, d);
  require(samples >= 2, ErrorKind::Parameter, "need at least two samples");
  const PowerWeight w(p);
  Philox rng(seed, stream_id({detail::kThetaStream, static_cast<std::uint64_t>(d), std::bit_cast<std::uint64_t>(p)}));
  const double box = std::pow(2.0, d - 1);
  std::vector<double> hits(samples);
  for (auto& h : hits) {
    double du = 0.0, dv = 0.0;
    for (int i = 0; i < d; ++i) {
      const double c = i == 0 ? rng.uniform() : 2.0 * rng.uniform() - 1.0;
      du += c * c;
      dv += (i == 0 ? (c - 1.0) * (c - 1.0) : c * c);
    }
    h = (w(du) + w(dv) < 1.0) ? box : 0.0;
  }
  return summarize(hits);
}

}  // namespace pwsp
