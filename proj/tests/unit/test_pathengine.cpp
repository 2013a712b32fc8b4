#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pwsp/density.hpp"
#include "pwsp/pathengine.hpp"
#include "pwsp/rng.hpp"
#include "pwsp/sampling.hpp"

namespace {

using pwsp::DomainSpec;
using pwsp::PathMode;
using pwsp::PathQuery;
using pwsp::Point;
using pwsp::PointCloud;

PathQuery query(const PointCloud& c, Point x, Point y, double p, PathMode mode) {
  PathQuery q;
  q.x = std::move(x);
  q.y = std::move(y);
  q.p = p;
  q.cloud = &c;
  q.mode = mode;
  return q;
}

Point random_point(const DomainSpec& dom, pwsp::Philox& rng) {
  Point x(dom.dim());
  for (int i = 0; i < dom.dim(); ++i) x[i] = rng.uniform() * dom.side(i);
  return x;
}

// Bellman-Ford over the complete graph: V - 1 rounds of relaxing every edge.
double bellman_ford(const PathQuery& q) {
  const std::size_t n = q.cloud->size() + 2;
  std::vector<Point> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(pwsp::vertex_point(q, i));
  const pwsp::PowerWeight w(q.p);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  dist[0] = 0.0;
  for (std::size_t round = 0; round + 1 < n; ++round) {
    bool changed = false;
    for (std::size_t a = 0; a < n; ++a) {
      if (!std::isfinite(dist[a])) continue;
      for (std::size_t b = 0; b < n; ++b) {
        const double c = dist[a] + w(q.cloud->domain().distance_sq_unchecked(v[a].data(), v[b].data()));
        if (c < dist[b]) {
          dist[b] = c;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return dist[n - 1];
}

TEST(ShortestPathExact, EmptyCloudIsDirectEdge) {
  const auto dom = DomainSpec::box(2, 4.0);
  const auto c = PointCloud::empty(dom);
  const auto r = pwsp::shortest_path_exact(query(c, {0, 0}, {2, 0}, 2.0, PathMode::Exact));
  EXPECT_EQ(r.length, 4.0);
  EXPECT_EQ(r.node_sequence, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(r.cardinality, 2u);
  EXPECT_EQ(r.max_edge, 2.0);
}

TEST(ShortestPathExact, MidpointHalvesTheCost) {
  const auto dom = DomainSpec::box(2, 4.0);
  const PointCloud c(dom, {1.0, 0.0}, 0, pwsp::GeneratorTag::IID);
  const auto r = pwsp::shortest_path_exact(query(c, {0, 0}, {2, 0}, 2.0, PathMode::Exact));
  EXPECT_EQ(r.length, 2.0);
  EXPECT_EQ(r.node_sequence, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(ShortestPathExact, PowerOneTakesTheDirectEdge) {
  pwsp::Philox rng(1);
  for (auto kind : {pwsp::DomainKind::EuclideanBox, pwsp::DomainKind::FlatTorus}) {
    const DomainSpec dom(kind, {1.0, 1.0});
    for (int t = 0; t < 50; ++t) {
      const auto c = pwsp::sample_iid(pwsp::uniform_density(dom), dom, 200, 2, t);
      const Point x = random_point(dom, rng), y = random_point(dom, rng);
      for (auto mode : {PathMode::Exact, PathMode::Pruned}) {
        const auto r = pwsp::shortest_path(query(c, x, y, 1.0, mode));
        EXPECT_EQ(r.length, pwsp::base_distance(dom, x, y));
        EXPECT_EQ(r.cardinality, 2u);
      }
    }
  }
}

TEST(ShortestPathExact, MatchesBellmanFordOnSmallClouds) {
  pwsp::Philox rng(7);
  for (int t = 0; t < 200; ++t) {
    const auto dom = t % 2 ? DomainSpec::torus(2, 1.0) : DomainSpec::box(3, 1.0);
    const double p = (t % 4 == 0) ? 1.5 : (t % 4 == 1 ? 2.0 : (t % 4 == 2 ? 3.0 : 2.5));
    const auto c = pwsp::sample_iid(pwsp::uniform_density(dom), dom, 10, 8, t);
    const auto q = query(c, random_point(dom, rng), random_point(dom, rng), p, PathMode::Exact);
    const auto r = pwsp::shortest_path_exact(q);
    EXPECT_EQ(r.length, bellman_ford(q)) << "instance " << t;
  }
}

TEST(ShortestPathExact, CapRefusesLargeClouds) {
  const auto dom = DomainSpec::box(2, 1.0);
  const auto c = pwsp::sample_iid(pwsp::uniform_density(dom), dom, 5001, 1);
  try {
    pwsp::shortest_path_exact(query(c, {0.1, 0.1}, {0.9, 0.9}, 2.0, PathMode::Exact));
    FAIL();
  } catch (const pwsp::Error& e) {
    EXPECT_EQ(e.kind(), pwsp::ErrorKind::Capacity);
    EXPECT_NE(std::string(e.what()).find("Pruned"), std::string::npos);
  }
}

TEST(ShortestPathExact, AnchorOutsideDomainRejected) {
  const auto dom = DomainSpec::box(2, 1.0);
  const auto c = PointCloud::empty(dom);
  EXPECT_THROW(pwsp::shortest_path_exact(query(c, {0.1, 0.1}, {1.9, 0.9}, 2.0, PathMode::Exact)), pwsp::Error);
}

TEST(ShortestPath, ResultInvariants) {
  pwsp::Philox rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto dom = t % 2 ? DomainSpec::torus(2, 1.0) : DomainSpec::box(2, 1.0);
    const auto f = t % 3 ? pwsp::uniform_density(dom) : pwsp::bump_density(dom, {0.5, 0.5}, 2.0, 0.2);
    const auto c = pwsp::sample_iid(f, dom, 400, 4, t);
    const auto q = query(c, random_point(dom, rng), random_point(dom, rng), 2.0, PathMode::Pruned);
    const auto r = pwsp::shortest_path(q);
    EXPECT_EQ(r.length, pwsp::recompute_length(q, r));
    EXPECT_LE(r.length, pwsp::power_edge_weight(dom, 2.0, q.x, q.y));
    EXPECT_GE(r.cardinality, 2u);
    EXPECT_EQ(r.node_sequence.front(), 0u);
    EXPECT_EQ(r.node_sequence.back(), c.size() + 1);
  }
}

TEST(ShortestPath, Symmetric) {
  pwsp::Philox rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto dom = t % 2 ? DomainSpec::torus(2, 1.0) : DomainSpec::box(2, 1.0);
    const auto c = pwsp::sample_iid(pwsp::uniform_density(dom), dom, 300, 5, t);
    const Point x = random_point(dom, rng), y = random_point(dom, rng);
    const auto a = pwsp::shortest_path(query(c, x, y, 2.0, PathMode::Pruned));
    const auto b = pwsp::shortest_path(query(c, y, x, 2.0, PathMode::Pruned));
    EXPECT_NEAR(a.length, b.length, 1e-12 * a.length);
  }
}

TEST(ShortestPath, MonotoneUnderPointAddition) {
  pwsp::Philox rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto dom = DomainSpec::box(2, 1.0);
    const auto c = pwsp::sample_iid(pwsp::uniform_density(dom), dom, 150, 6, t);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (rng.uniform() < 0.6) keep.push_back(i);
    const auto sub = c.select(keep, c.tag());
    const Point x = random_point(dom, rng), y = random_point(dom, rng);
    const double p = 1.0 + 2.0 * rng.uniform();
    EXPECT_LE(pwsp::shortest_path_exact(query(c, x, y, p, PathMode::Exact)).length,
              pwsp::shortest_path_exact(query(sub, x, y, p, PathMode::Exact)).length);
  }
}

TEST(ShortestPathPruned, EqualsExactIncludingNodeSequence) {
  pwsp::Philox rng(6);
  const double powers[] = {1.0, 1.5, 2.0, 3.0};
  for (int t = 0; t < 120; ++t) {
    const int d = 2 + t % 2;
    const auto dom = (t / 2) % 2 ? DomainSpec::torus(d, 1.0) : DomainSpec::box(d, 1.0);
    const auto f = (t / 4) % 2 ? pwsp::uniform_density(dom)
                               : pwsp::bump_density(dom, Point(d, 0.5), 3.0, 0.15);
    const std::size_t n = 1 + std::size_t(rng.uniform() * 600);
    const auto c = pwsp::sample_iid(f, dom, n, 7, t);
    const double p = powers[(t / 8) % 4];
    const Point x = random_point(dom, rng), y = random_point(dom, rng);
    const auto exact = pwsp::shortest_path_exact(query(c, x, y, p, PathMode::Exact));
    const auto pruned = pwsp::shortest_path_pruned(query(c, x, y, p, PathMode::Pruned));
    ASSERT_EQ(pruned.length, exact.length) << "instance " << t;
    ASSERT_EQ(pruned.node_sequence, exact.node_sequence) << "instance " << t;
    EXPECT_NE(pruned.certificate, pwsp::Certificate::PrunedUnverified);
  }
}

TEST(ShortestPathPruned, DuplicatePointsAreHarmless) {
  const auto dom = DomainSpec::box(2, 1.0);
  auto base = pwsp::sample_iid(pwsp::uniform_density(dom), dom, 200, 9);
  std::vector<double> coords = base.coords();
  coords.insert(coords.end(), base.coords().begin(), base.coords().end());
  const PointCloud dup(dom, coords, 0, pwsp::GeneratorTag::IID);
  const Point x{0.1, 0.2}, y{0.85, 0.7};
  const auto a = pwsp::shortest_path_exact(query(base, x, y, 2.0, PathMode::Exact));
  const auto b = pwsp::shortest_path_exact(query(dup, x, y, 2.0, PathMode::Exact));
  const auto c = pwsp::shortest_path_pruned(query(dup, x, y, 2.0, PathMode::Pruned));
  EXPECT_EQ(a.length, b.length);
  EXPECT_EQ(b.length, c.length);
  EXPECT_EQ(b.node_sequence, c.node_sequence);
}

TEST(ShortestPathPruned, EmptyCloudIsVerifiedDirectEdge) {
  const auto dom = DomainSpec::box(2, 4.0);
  const auto c = PointCloud::empty(dom);
  const auto r = pwsp::shortest_path_pruned(query(c, {0, 0}, {2, 0}, 2.0, PathMode::Pruned));
  EXPECT_EQ(r.length, 4.0);
  EXPECT_EQ(r.node_sequence, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(r.certificate, pwsp::Certificate::PrunedVerified);
}

TEST(ShortestPathPruned, RadiusCapCanLeaveResultUnverified) {
  const auto dom = DomainSpec::box(2, 1.0);
  const auto c = pwsp::sample_iid(pwsp::uniform_density(dom), dom, 20, 3);
  auto q = query(c, {0.1, 0.1}, {0.9, 0.9}, 2.0, PathMode::Pruned);
  q.prune_radius_schedule = {0.05};
  q.max_radius = 0.2;
  try {
    const auto r = pwsp::shortest_path_pruned(q);
    EXPECT_EQ(r.certificate, pwsp::Certificate::PrunedUnverified);
  } catch (const pwsp::Error& e) {
    EXPECT_EQ(e.kind(), pwsp::ErrorKind::Capacity);
  }
  q.max_radius.reset();
  const auto full = pwsp::shortest_path_pruned(q);
  q.mode = PathMode::Exact;
  EXPECT_EQ(full.length, pwsp::shortest_path_exact(q).length);
}

TEST(ShortestPathPruned, PowerOneIgnoresRadiusCap) {
  const auto dom = DomainSpec::box(2, 1.0);
  const auto c = pwsp::sample_iid(pwsp::uniform_density(dom), dom, 20, 3);
  auto q = query(c, {0.1, 0.1}, {0.9, 0.9}, 1.0, PathMode::Pruned);
  q.prune_radius_schedule = {0.05};
  q.max_radius = 0.2;
  const auto r = pwsp::shortest_path_pruned(q);
  EXPECT_EQ(r.certificate, pwsp::Certificate::PrunedVerified);
  EXPECT_EQ(r.cardinality, 2u);
}

TEST(ShortestPathPruned, ExplicitScheduleValidated) {
  const auto dom = DomainSpec::box(2, 1.0);
  const auto c = PointCloud::empty(dom);
  auto q = query(c, {0.1, 0.1}, {0.9, 0.9}, 2.0, PathMode::Pruned);
  q.prune_radius_schedule = {0.2, 0.1};
  EXPECT_THROW(pwsp::shortest_path_pruned(q), pwsp::Error);
}

TEST(ShortestPathPruned, LargeUniformCloudAvoidsDiameterFallback) {
  const auto dom = DomainSpec::box(2, 1.0);
  const auto f = pwsp::uniform_density(dom);
  int fallbacks = 0;
  for (int s = 0; s < 100; ++s) {
    const auto c = pwsp::sample_iid(f, dom, 100000, 1234, s);
    const auto r = pwsp::shortest_path_pruned(query(c, {0.25, 0.5}, {0.75, 0.5}, 2.0, PathMode::Pruned));
    fallbacks += r.stats.diameter_fallback;
  }
  EXPECT_LE(fallbacks, 1);
}

TEST(Dominated, Examples) {
  const auto dom = DomainSpec::box(2, 4.0);
  EXPECT_TRUE(pwsp::dominated(Point{0, 0}, Point{2, 0}, Point{1, 0}, 2.0, dom));
  EXPECT_FALSE(pwsp::dominated(Point{0, 0}, Point{2, 0}, Point{1, 1}, 2.0, dom));
  pwsp::Philox rng(2);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_FALSE(pwsp::dominated(random_point(dom, rng), random_point(dom, rng), random_point(dom, rng), 1.0, dom));
  }
  EXPECT_FALSE(pwsp::dominated(Point{0, 0}, Point{2, 0}, Point{1, 0}, 1.0, dom));
}

TEST(Dominated, RemovingDominatedEdgesKeepsLength) {
  pwsp::Philox rng(12);
  for (int t = 0; t < 30; ++t) {
    const auto dom = DomainSpec::box(2, 1.0);
    const auto c = pwsp::sample_iid(pwsp::uniform_density(dom), dom, 60, 13, t);
    const auto q = query(c, random_point(dom, rng), random_point(dom, rng), 2.0, PathMode::Exact);
    const std::size_t n = c.size() + 2;
    std::vector<Point> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(pwsp::vertex_point(q, i));
    const pwsp::PowerWeight w(2.0);
    std::vector<double> dist(n, INFINITY);
    std::vector<char> done(n, 0);
    dist[0] = 0;
    for (std::size_t it = 0; it < n; ++it) {
      std::size_t u = n;
      for (std::size_t k = 0; k < n; ++k)
        if (!done[k] && (u == n || dist[k] < dist[u])) u = k;
      done[u] = 1;
      for (std::size_t k = 0; k < n; ++k) {
        if (done[k]) continue;
        bool dom_edge = false;
        for (std::size_t m = 1; m + 1 < n && !dom_edge; ++m)
          if (m != u && m != k) dom_edge = pwsp::dominated(v[u], v[k], v[m], 2.0, dom);
        if (!dom_edge) dist[k] = std::min(dist[k], dist[u] + w(dom.distance_sq_unchecked(v[u].data(), v[k].data())));
      }
    }
    EXPECT_EQ(dist[n - 1], pwsp::shortest_path_exact(q).length);
  }
}

TEST(PathLinkStats, FlagsLongLinks) {
  const pwsp::ConformalParams cp(2.0, 2);
  pwsp::PathResult r;
  r.max_edge = 1e-4;
  auto s = pwsp::path_link_stats(r, cp, 10000, 1.0);
  EXPECT_DOUBLE_EQ(s.threshold, std::pow(10000.0, (1.0 / 6.0 - 1.0) / 2.0));
  EXPECT_FALSE(s.exceeds);
  r.max_edge = 0.5;
  EXPECT_TRUE(pwsp::path_link_stats(r, cp, 10000, 1.0).exceeds);
}

TEST(PathJson, HasContractFields) {
  const auto dom = DomainSpec::box(2, 4.0);
  const PointCloud c(dom, {1.0, 0.0}, 0, pwsp::GeneratorTag::IID);
  const auto q = query(c, {0, 0}, {2, 0}, 2.0, PathMode::Exact);
  const auto j = pwsp::to_json(q, pwsp::shortest_path(q));
  EXPECT_EQ(j.at("length"), 2.0);
  EXPECT_EQ(j.at("cardinality"), 3);
  EXPECT_EQ(j.at("max_edge"), 1.0);
  EXPECT_EQ(j.at("certificate"), "ExactMode");
  EXPECT_EQ(j.at("nodes"), nlohmann::json::parse("[[0.0,0.0],[1.0,0.0],[2.0,0.0]]"));
}

}  // namespace
