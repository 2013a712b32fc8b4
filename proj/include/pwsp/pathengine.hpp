#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pwsp/error.hpp"
#include "pwsp/geometry.hpp"
#include "pwsp/sampling.hpp"
#include "pwsp/spatial_grid.hpp"

namespace pwsp {

enum class PathMode { Exact, Pruned };

/// How the optimality of a result is known.
///  - ExactMode: the full complete graph was (or could have been) examined.
///  - PrunedVerified: the pruned search proved no excluded edge could help.
///  - PrunedUnverified: a caller-imposed radius cap stopped the expansion
///    before the proof completed; the length is an upper bound only.
enum class Certificate { ExactMode, PrunedVerified, PrunedUnverified };

inline const char* to_string(Certificate c) {
  switch (c) {
    case Certificate::ExactMode: return "ExactMode";
    case Certificate::PrunedVerified: return "PrunedVerified";
    case Certificate::PrunedUnverified: return "PrunedUnverified";
  }
  return "unknown";
}

inline constexpr std::size_t kDefaultExactCap = 5000;

struct PathQuery {
  Point x;
  Point y;
  double p = 2.0;
  const PointCloud* cloud = nullptr;
  PathMode mode = PathMode::Pruned;

  /// Explicit increasing radii for the pruned search. When empty the first
  /// radius is radius_factor * intensity^((alpha - 1)/d) and later radii double.
  std::vector<double> prune_radius_schedule;
  double radius_factor = 4.0;
  /// Points per unit volume (n f_m). Defaults to n / volume(domain).
  std::optional<double> intensity;
  /// Optional hard cap on the expansion radius; hitting it can yield PrunedUnverified.
  std::optional<double> max_radius;
  std::size_t exact_cap = kDefaultExactCap;
};

struct PathStats {
  std::size_t settled = 0;
  std::size_t relaxations = 0;
  std::size_t ring_expansions = 0;
  int max_ring = 0;
  bool diameter_fallback = false;
  double initial_radius = 0.0;
};

/// Vertex indices: 0 is the anchor x, 1..n the cloud points in order, n+1 the anchor y.
struct PathResult {
  double length = 0.0;
  std::vector<std::size_t> node_sequence;
  std::size_t cardinality = 0;
  double max_edge = 0.0;
  Certificate certificate = Certificate::ExactMode;
  PathStats stats;

  /// Base length of the first and the last hop.
  double first_edge = 0.0;
  double last_edge = 0.0;
};

namespace detail {

inline constexpr std::size_t kNoPred = std::numeric_limits<std::size_t>::max();

/// Anchors and cloud laid out as one vertex array.
struct VertexSet {
  const DomainSpec* domain;
  std::vector<double> coords;
  std::size_t count;
  int dim;

  VertexSet(const PathQuery& q) : domain(&q.cloud->domain()), dim(q.cloud->dim()) {
    domain->require_contains(q.x, "anchor x");
    domain->require_contains(q.y, "anchor y");
    const auto& c = q.cloud->coords();
    count = q.cloud->size() + 2;
    coords.reserve(count * static_cast<std::size_t>(dim));
    coords.insert(coords.end(), q.x.begin(), q.x.end());
    coords.insert(coords.end(), c.begin(), c.end());
    coords.insert(coords.end(), q.y.begin(), q.y.end());
  }

  const double* at(std::size_t v) const { return coords.data() + v * static_cast<std::size_t>(dim); }
  double dist_sq(std::size_t a, std::size_t b) const { return domain->distance_sq_unchecked(at(a), at(b)); }
};

/// Per-vertex Dijkstra label ordered by (length, hops, predecessor index):
/// among equal lengths fewer hops wins, then the smaller predecessor.
struct Labels {
  std::vector<double> dist;
  std::vector<std::uint32_t> hops;
  std::vector<std::size_t> pred;
  std::vector<char> settled;

  explicit Labels(std::size_t n)
      : dist(n, std::numeric_limits<double>::infinity()), hops(n, 0), pred(n, kNoPred), settled(n, 0) {}

  /// Returns 0 if unchanged, 1 if only the predecessor changed, 2 if (dist, hops) changed.
  int relax(std::size_t u, std::size_t v, double w) {
    const double cand = dist[u] + w;
    const std::uint32_t nh = hops[u] + 1;
    if (cand < dist[v] || (cand == dist[v] && (nh < hops[v] || (nh == hops[v] && u < pred[v])))) {
      const bool key_changed = cand != dist[v] || nh != hops[v];
      dist[v] = cand;
      hops[v] = nh;
      pred[v] = u;
      return key_changed ? 2 : 1;
    }
    return 0;
  }

  bool before(std::size_t a, std::size_t b) const {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    if (hops[a] != hops[b]) return hops[a] < hops[b];
    return a < b;
  }
};

inline PathResult finish(const VertexSet& vs, const Labels& labels, std::size_t target) {
  PathResult r;
  r.length = labels.dist[target];
  for (std::size_t v = target; v != kNoPred; v = labels.pred[v]) r.node_sequence.push_back(v);
  std::reverse(r.node_sequence.begin(), r.node_sequence.end());
  r.cardinality = r.node_sequence.size();
  for (std::size_t k = 1; k < r.node_sequence.size(); ++k) {
    const double e = std::sqrt(vs.dist_sq(r.node_sequence[k - 1], r.node_sequence[k]));
    r.max_edge = std::max(r.max_edge, e);
    if (k == 1) r.first_edge = e;
    if (k + 1 == r.node_sequence.size()) r.last_edge = e;
  }
  return r;
}

/// At p = 1 the triangle inequality makes the direct edge optimal, and it has
/// the fewest hops among any ties. Returning it directly keeps rounding in a
/// multi-hop sum from undercutting the exact answer.
inline PathResult direct_path(const VertexSet& vs, Certificate cert) {
  const std::size_t target = vs.count - 1;
  PathResult r;
  const double e = std::sqrt(vs.dist_sq(0, target));
  r.length = e;
  r.node_sequence = {0, target};
  r.cardinality = 2;
  r.max_edge = r.first_edge = r.last_edge = e;
  r.certificate = cert;
  return r;
}

inline void check_query(const PathQuery& q) {
  require(q.cloud != nullptr, ErrorKind::Parameter, "path query has no point cloud");
  require(std::isfinite(q.p) && q.p >= 1.0, ErrorKind::Parameter, "power p must be >= 1");
}

}  // namespace detail

/// Reference O(n^2) Dijkstra over the complete graph on cloud + {x, y}.
inline PathResult shortest_path_exact(const PathQuery& q) {
  detail::check_query(q);
  if (q.cloud->size() > q.exact_cap) {
    fail(ErrorKind::Capacity, "exact mode is capped at " + std::to_string(q.exact_cap) + " points (cloud has " +
                                  std::to_string(q.cloud->size()) + "); use Pruned mode");
  }
  const detail::VertexSet vs(q);
  if (q.p == 1.0) return detail::direct_path(vs, Certificate::ExactMode);
  const PowerWeight weight(q.p);
  const std::size_t n = vs.count;
  const std::size_t target = n - 1;
  detail::Labels labels(n);
  labels.dist[0] = 0.0;

  PathStats stats;
  while (true) {
    std::size_t u = detail::kNoPred;
    for (std::size_t v = 0; v < n; ++v) {
      if (labels.settled[v] || !std::isfinite(labels.dist[v])) continue;
      if (u == detail::kNoPred || labels.before(v, u)) u = v;
    }
    labels.settled[u] = 1;
    ++stats.settled;
    if (u == target) break;
    const double* pu = vs.at(u);
    for (std::size_t v = 0; v < n; ++v) {
      if (labels.settled[v]) continue;
      labels.relax(u, v, weight(vs.domain->distance_sq_unchecked(pu, vs.at(v))));
      ++stats.relaxations;
    }
  }
  auto r = detail::finish(vs, labels, target);
  r.certificate = Certificate::ExactMode;
  r.stats = stats;
  return r;
}

/// Exact Dijkstra that only looks at short edges first.
///
/// Each settled vertex u relaxes its edges of length <= R_0 immediately.
/// Longer edges are grouped in rings (R_{k-1}, R_k]; the ring is deferred
/// behind a heap event keyed D(u) + R_{k-1}^p, a lower bound for every
/// path continuing through that ring. Events are processed before vertices
/// of equal key, so when the target is popped every edge that could still
/// improve it has been relaxed. The result is therefore identical to
/// shortest_path_exact, tie-breaking included.
inline PathResult shortest_path_pruned(const PathQuery& q) {
  detail::check_query(q);
  const detail::VertexSet vs(q);
  if (q.p == 1.0) return detail::direct_path(vs, Certificate::PrunedVerified);
  const DomainSpec& domain = *vs.domain;
  const PowerWeight weight(q.p);
  const std::size_t n = vs.count;
  const std::size_t target = n - 1;
  const double max_dist = domain.diameter();

  std::vector<double> radii;
  if (!q.prune_radius_schedule.empty()) {
    radii = q.prune_radius_schedule;
    for (std::size_t k = 0; k < radii.size(); ++k) {
      require(std::isfinite(radii[k]) && radii[k] > 0.0 && (k == 0 || radii[k] > radii[k - 1]), ErrorKind::Parameter,
              "prune radius schedule must be positive and strictly increasing");
    }
  } else {
    const double intensity =
        q.intensity.value_or(static_cast<double>(q.cloud->size()) / domain.volume());
    require(intensity >= 0.0, ErrorKind::Parameter, "intensity must be nonnegative");
    const ConformalParams params(q.p, domain.dim());
    double r0 = intensity > 0.0 ? q.radius_factor * params.link_threshold(intensity)
                                : std::numeric_limits<double>::infinity();
    require(r0 > 0.0, ErrorKind::Parameter, "radius factor must be positive");
    radii.push_back(std::min(r0, max_dist));
  }
  while (radii.back() < max_dist) radii.push_back(std::min(2.0 * radii.back(), max_dist));
  // The last ring has no upper filter so it always covers the whole vertex set.
  const auto last_ring = static_cast<std::size_t>(
      std::find_if(radii.begin(), radii.end(), [&](double r) { return r >= max_dist; }) - radii.begin());
  std::size_t cap_ring = last_ring;
  if (q.max_radius) {
    require(*q.max_radius > 0.0, ErrorKind::Parameter, "max radius must be positive");
    // rings reaching past the cap are never expanded
    cap_ring = 0;
    while (cap_ring < last_ring && radii[cap_ring + 1] <= *q.max_radius) ++cap_ring;
  }

  double cell = radii.front() / 2.0;
  if (!(cell > 0.0) || !std::isfinite(cell)) cell = domain.min_side();
  const CellGrid grid(domain, vs.coords, cell);

  struct Entry {
    double key;
    std::uint8_t is_vertex;  // events (0) before vertices (1) on equal keys
    std::uint32_t hops;
    std::uint32_t vertex;
    std::uint32_t ring;
  };
  auto later = [](const Entry& a, const Entry& b) {
    if (a.key != b.key) return a.key > b.key;
    if (a.is_vertex != b.is_vertex) return a.is_vertex > b.is_vertex;
    if (a.hops != b.hops) return a.hops > b.hops;
    return a.vertex > b.vertex;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(later)> heap(later);

  detail::Labels labels(n);
  PathStats stats;
  stats.initial_radius = radii.front();
  double suppressed_key = std::numeric_limits<double>::infinity();

  auto expand = [&](std::size_t u, std::size_t ring) {
    const double inner_sq = ring == 0 ? -1.0 : radii[ring - 1] * radii[ring - 1];
    const double outer = radii[ring];
    const double outer_sq = ring == last_ring ? std::numeric_limits<double>::infinity() : outer * outer;
    const double* pu = vs.at(u);
    grid.for_each_candidate(pu, outer, [&](std::size_t v) {
      if (labels.settled[v]) return;
      const double dsq = domain.distance_sq_unchecked(pu, vs.at(v));
      if (dsq <= inner_sq || dsq > outer_sq) return;
      ++stats.relaxations;
      if (labels.relax(u, v, weight(dsq)) == 2) {
        heap.push({labels.dist[v], 1, labels.hops[v], static_cast<std::uint32_t>(v), 0});
      }
    });
    if (ring < last_ring) {
      const double key = labels.dist[u] + weight(outer * outer);
      if (ring + 1 <= cap_ring) {
        heap.push({key, 0, 0, static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(ring + 1)});
      } else {
        suppressed_key = std::min(suppressed_key, key);
      }
    }
  };

  labels.dist[0] = 0.0;
  heap.push({0.0, 1, 0, 0, 0});
  bool reached = false;
  while (!heap.empty()) {
    const Entry e = heap.top();
    heap.pop();
    if (e.is_vertex) {
      const std::size_t v = e.vertex;
      if (labels.settled[v] || e.key != labels.dist[v] || e.hops != labels.hops[v]) continue;
      labels.settled[v] = 1;
      ++stats.settled;
      if (v == target) {
        reached = true;
        break;
      }
      expand(v, 0);
    } else {
      ++stats.ring_expansions;
      stats.max_ring = std::max(stats.max_ring, static_cast<int>(e.ring));
      if (e.ring == last_ring) stats.diameter_fallback = true;
      expand(e.vertex, e.ring);
    }
  }
  if (!reached) fail(ErrorKind::Capacity, "target unreachable within the configured maximum radius");

  auto r = detail::finish(vs, labels, target);
  r.stats = stats;
  if (suppressed_key <= r.length) r.certificate = Certificate::PrunedUnverified;
  else if (stats.diameter_fallback) r.certificate = Certificate::ExactMode;
  else r.certificate = Certificate::PrunedVerified;
  return r;
}

inline PathResult shortest_path(const PathQuery& q) {
  return q.mode == PathMode::Exact ? shortest_path_exact(q) : shortest_path_pruned(q);
}

/// True iff the two-hop path u -> w -> v is strictly cheaper than the edge (u, v),
/// i.e. h(u, v; w) = |u-w|^p + |v-w|^p - |u-v|^p < 0. Never true at p = 1.
inline bool dominated(PointView u, PointView v, PointView w, double p, const DomainSpec& domain) {
  const PowerWeight weight(p);
  if (p == 1.0) return false;
  const double h = weight(domain.distance_sq_unchecked(u.data(), w.data())) +
                   weight(domain.distance_sq_unchecked(v.data(), w.data())) -
                   weight(domain.distance_sq_unchecked(u.data(), v.data()));
  return h < 0.0;
}

/// Coordinates of vertex `v` in the numbering used by PathResult.
inline Point vertex_point(const PathQuery& q, std::size_t v) {
  const std::size_t n = q.cloud->size();
  if (v == 0) return q.x;
  if (v == n + 1) return q.y;
  const auto p = q.cloud->point(v - 1);
  return Point(p.begin(), p.end());
}

/// Sum of edge weights along the node sequence, accumulated left to right.
inline double recompute_length(const PathQuery& q, const PathResult& r) {
  const PowerWeight weight(q.p);
  const auto& dom = q.cloud->domain();
  double total = 0.0;
  for (std::size_t k = 1; k < r.node_sequence.size(); ++k) {
    const Point a = vertex_point(q, r.node_sequence[k - 1]);
    const Point b = vertex_point(q, r.node_sequence[k]);
    total += weight(dom.distance_sq_unchecked(a.data(), b.data()));
  }
  return total;
}

inline nlohmann::json to_json(const PathQuery& q, const PathResult& r) {
  nlohmann::json nodes = nlohmann::json::array();
  for (auto v : r.node_sequence) nodes.push_back(vertex_point(q, v));
  return {{"length", r.length},
          {"cardinality", r.cardinality},
          {"max_edge", r.max_edge},
          {"certificate", to_string(r.certificate)},
          {"nodes", std::move(nodes)}};
}

/// Longest link of a path against the threshold (n f_m)^((alpha - 1)/d).
struct LinkStats {
  double max_edge;
  double threshold;
  bool exceeds;
};

inline LinkStats path_link_stats(const PathResult& r, const ConformalParams& params, double n, double f_m,
                                 double threshold_factor = 1.0) {
  require(n > 0.0 && f_m > 0.0, ErrorKind::Parameter, "link statistics need n > 0 and f_m > 0");
  const double thr = threshold_factor * params.link_threshold(n * f_m);
  return {r.max_edge, thr, r.max_edge > thr};
}

}  // namespace pwsp
