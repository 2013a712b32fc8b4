// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//
// Usage: acceptance [output_dir]   (default ./acceptance_out)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "pwsp/density.hpp"
#include "pwsp/estimation.hpp"
#include "pwsp/geodesic.hpp"
#include "pwsp/pathengine.hpp"
#include "pwsp/records_io.hpp"
#include "pwsp/rng.hpp"
#include "pwsp/sampling.hpp"

namespace fs = std::filesystem;
using namespace pwsp;

namespace {

constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

Point random_point(const DomainSpec& dom, Philox& rng) {
  Point x(static_cast<std::size_t>(dom.dim()));
  for (int i = 0; i < dom.dim(); ++i) x[static_cast<std::size_t>(i)] = rng.uniform() * dom.side(i);
  return x;
}

// Random instance drawn from a fixed stream so every criterion is replayable.
struct Instance {
  DomainSpec dom;
  DensityField f;
  PointCloud cloud;
  Point x, y;
  double p;
};

Instance make_instance(std::uint64_t crit, std::size_t i, int d, double p, bool bump, bool torus, std::size_t n_max) {
  Philox rng(kSeed, stream_id({crit, i}));
  DomainSpec dom = torus ? DomainSpec::torus(d, 1.0) : DomainSpec::box(d, 1.0);
  DensityField f = bump ? bump_density(dom, Point(static_cast<std::size_t>(d), 0.5), 2.0, 0.2) : uniform_density(dom);
  const auto n = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n_max + 1));
  PointCloud cloud = sample_iid(f, dom, std::min(n, n_max), kSeed, stream_id({crit, i, 1}));
  Point x = random_point(dom, rng);
  Point y = random_point(dom, rng);
  return {dom, f, std::move(cloud), std::move(x), std::move(y), p};
}

PathQuery query_of(const Instance& in, PathMode mode) {
  PathQuery q;
  q.x = in.x;
  q.y = in.y;
  q.p = in.p;
  q.cloud = &in.cloud;
  q.mode = mode;
  return q;
}

void write_csv(const fs::path& dir, const std::vector<EstimateRecord>& recs, int d, double p, const std::string& tag = "") {
  fs::create_directories(dir);
  std::string name = record_file_name(recs.front().quantity, d, p, kSeed);
  if (!tag.empty()) name = tag + "_" + name;
  std::ofstream out(dir / name, std::ios::binary);
  write_records_csv(out, recs);
}

// 1. Pruned and exact engines agree bit for bit.
Outcome criterion_1() {
  const double ps[] = {1.0, 1.5, 2.0, 3.0};
  std::size_t mismatches = 0, node_mismatches = 0, unverified = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    const int d = 2 + static_cast<int>(i % 2);
    const double p = ps[(i / 2) % 4];
    const auto in = make_instance(1, i, d, p, (i / 8) % 2 == 1, (i / 16) % 2 == 1, 2000);
    const auto exact = shortest_path_exact(query_of(in, PathMode::Exact));
    const auto pruned = shortest_path_pruned(query_of(in, PathMode::Pruned));
    if (exact.length != pruned.length) ++mismatches;
    if (exact.node_sequence != pruned.node_sequence) ++node_mismatches;
    if (pruned.certificate == Certificate::PrunedUnverified) ++unverified;
  }
  return {mismatches == 0, "500 instances, " + std::to_string(mismatches) + " length mismatches, " +
                               std::to_string(node_mismatches) + " node-sequence mismatches, " +
                               std::to_string(unverified) + " unverified"};
}

// Dijkstra over the complete graph minus every edge dominated by some cloud point.
double length_without_dominated_edges(const Instance& in, std::uint64_t order_seed) {
  const PathQuery q = query_of(in, PathMode::Exact);
  const std::size_t n = in.cloud.size() + 2;
  std::vector<Point> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(vertex_point(q, i));
  std::vector<std::size_t> witnesses(in.cloud.size());
  for (std::size_t m = 0; m < witnesses.size(); ++m) witnesses[m] = m + 1;
  Philox rng(order_seed);
  std::shuffle(witnesses.begin(), witnesses.end(), rng);
  const PowerWeight w(in.p);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<char> done(n, 0);
  dist[0] = 0.0;
  for (std::size_t it = 0; it < n; ++it) {
    std::size_t u = n;
    for (std::size_t k = 0; k < n; ++k) {
      if (!done[k] && (u == n || dist[k] < dist[u])) u = k;
    }
    if (u == n || !std::isfinite(dist[u])) break;
    if (u == n - 1) break;
    done[u] = 1;
    for (std::size_t k = 0; k < n; ++k) {
      if (done[k]) continue;
      const double cand = dist[u] + w(in.dom.distance_sq_unchecked(v[u].data(), v[k].data()));
      if (!(cand < dist[k])) continue;
      bool dominated_edge = false;
      for (std::size_t m : witnesses) {
        if (m != u && m != k && dominated(v[u], v[k], v[m], in.p, in.dom)) {
          dominated_edge = true;
          break;
        }
      }
      if (!dominated_edge) dist[k] = cand;
    }
  }
  return dist[n - 1];
}

// 2. Removing dominated edges never changes the exact length.
Outcome criterion_2() {
  const double ps[] = {1.5, 2.0, 3.0};
  std::size_t changed = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    const int d = 2 + static_cast<int>(i % 2);
    const auto in = make_instance(2, i, d, ps[(i / 2) % 3], (i / 6) % 2 == 1, (i / 12) % 2 == 1, 500);
    const double full = shortest_path_exact(query_of(in, PathMode::Exact)).length;
    if (length_without_dominated_edges(in, stream_id({2, i, 2})) != full) ++changed;
  }
  return {changed == 0, "200 instances, " + std::to_string(changed) + " length changes"};
}

// 3. Removing points never shortens the path.
Outcome criterion_3() {
  const double ps[] = {1.0, 1.5, 2.0, 3.0};
  std::size_t violations = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const int d = 2 + static_cast<int>(i % 2);
    const auto in = make_instance(3, i, d, ps[(i / 2) % 4], (i / 8) % 2 == 1, (i / 16) % 2 == 1, 1000);
    Philox rng(kSeed, stream_id({3, i, 3}));
    const double keep_prob = rng.uniform();
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < in.cloud.size(); ++k) {
      if (rng.uniform() < keep_prob) keep.push_back(k);
    }
    Instance sub{in.dom, in.f, in.cloud.select(keep, in.cloud.tag()), in.x, in.y, in.p};
    const PathMode mode = i % 3 == 0 ? PathMode::Exact : PathMode::Pruned;
    const double full = shortest_path(query_of(in, mode)).length;
    const double part = shortest_path(query_of(sub, mode)).length;
    if (!(full <= part)) ++violations;
  }
  return {violations == 0, "1000 pairs, " + std::to_string(violations) + " violations"};
}

// 4. At p = 1 both estimators are exactly 1.
Outcome criterion_4() {
  TubeEstimatorConfig cfg;
  cfg.d = 2;
  cfg.p = 1.0;
  cfg.t_schedule = {10.0, 20.0, 40.0, 80.0};
  cfg.trials = 30;
  const auto est = estimate_C(cfg, kSeed);
  bool ok = est.cdp.value == 1.0 && est.cdp.std_err == 0.0;
  for (const auto& r : est.curve) ok = ok && r.value == 1.0 && r.std_err == 0.0;

  const auto dom = DomainSpec::box(2, 1.0);
  const std::vector<AnchorPair> pairs{{{0.3, 0.5}, {0.7, 0.5}}, {{0.26, 0.3}, {0.7, 0.74}}};
  const auto conv =
      convergence_experiment(dom, uniform_density(dom), ConformalParams(1.0, 2), {1000, 10000}, pairs, 10, kSeed);
  std::size_t off = 0;
  for (const auto& r : conv.rows) off += r.ratio != 1.0;
  for (const auto& r : conv.records) ok = ok && r.value == 1.0 && r.std_err == 0.0;
  ok = ok && off == 0;
  return {ok, "C estimate " + num(est.cdp.value) + " (stderr " + num(est.cdp.std_err) + "), " + std::to_string(off) +
                  " of " + std::to_string(conv.rows.size()) + " convergence ratios differ from 1"};
}

// 5. Galton-Watson generation means against pi and the analytic bound.
std::vector<EstimateRecord> gw_records(int threads) {
  return gw_generation_mean(1.0, 1.0, ConformalParams(2.0, 2), 3, 10000, kSeed, threads);
}

Outcome criterion_5(const fs::path& dir) {
  const auto recs = gw_records(1);
  write_csv(dir, recs, 2, 2.0);
  bool ok = std::abs(recs[0].value - std::numbers::pi) <= 3.0 * recs[0].std_err;
  std::string detail = "gen1 " + num(recs[0].value) + " +- " + num(recs[0].std_err) + " vs pi";
  for (std::size_t g = 1; g < recs.size(); ++g) {
    const double bound = recs[g].params.at("analytic_bound").get<double>();
    ok = ok && recs[g].value <= bound + 3.0 * recs[g].std_err;
    detail += "; gen" + std::to_string(g + 1) + " " + num(recs[g].value) + " +- " + num(recs[g].std_err) + " vs bound " +
              num(bound);
  }
  return {ok, detail};
}

// 6. Uniform and bump ratios on the torus.
struct Conv6 {
  ConvergenceResult uniform, bump;
};

Conv6 conv6_run(int threads) {
  const auto dom = DomainSpec::torus(2, 1.0);
  ExperimentOptions opt;
  opt.resolution = 512;
  opt.threads = threads;
  const ConformalParams params(2.0, 2);
  const std::vector<std::size_t> ns{1000, 10000, 100000};
  const std::vector<AnchorPair> pairs{{{0.25, 0.5}, {0.75, 0.5}}};
  Conv6 out;
  out.uniform = convergence_experiment(dom, uniform_density(dom), params, ns, pairs, 50, kSeed, opt);
  out.bump = convergence_experiment(dom, bump_density(dom, {0.5, 0.5}, 1.0, 0.15), params, ns, pairs, 50, kSeed, opt);
  return out;
}

void conv6_write(const fs::path& dir, const Conv6& c) {
  write_csv(dir, c.uniform.records, 2, 2.0, "uniform");
  write_csv(dir, c.bump.records, 2, 2.0, "bump");
}

Outcome criterion_6(const fs::path& dir) {
  const auto c = conv6_run(1);
  conv6_write(dir, c);
  bool ok = true;
  std::string detail;
  for (const auto* res : {&c.uniform, &c.bump}) {
    const std::string name = res == &c.uniform ? "uniform" : "bump";
    detail += name + " dispersion";
    for (std::size_t k = 0; k < res->records.size(); ++k) {
      const double disp = res->records[k].std_err / res->records[k].value;
      detail += " " + num(disp);
      if (k > 0) ok = ok && disp < res->records[k - 1].std_err / res->records[k - 1].value;
    }
    detail += "; ";
  }
  const double mu = c.uniform.records.back().value;
  const double mb = c.bump.records.back().value;
  const double rel = std::abs(mu - mb) / std::min(mu, mb);
  ok = ok && rel <= 0.05;
  detail += "n=1e5 means " + num(mu) + " (uniform) vs " + num(mb) + " (bump), relative gap " + num(rel);
  return {ok, detail};
}

// 7. Tube estimator: stable tail of the mean curve, and subadditivity.
struct Tube7 {
  TubeEstimate est;
  EstimateRecord sub;
};

Tube7 tube7_run(int threads) {
  TubeEstimatorConfig cfg;
  cfg.d = 2;
  cfg.p = 2.0;
  cfg.t_schedule = {10.0, 20.0, 40.0, 80.0};
  cfg.b_rule = TubeRadiusRule{TubeRadiusRule::Kind::Power, 1.0, 0.5};
  cfg.trials = 200;
  cfg.threads = threads;
  return {estimate_C(cfg, kSeed), subadditivity_check(cfg, 20.0, 20.0, 200, kSeed)};
}

void tube7_write(const fs::path& dir, const Tube7& t) {
  write_csv(dir, t.est.curve, 2, 2.0);
  std::vector<EstimateRecord> cdp{t.est.cdp};
  if (t.est.extrapolated) cdp.push_back(*t.est.extrapolated);
  write_csv(dir, cdp, 2, 2.0);
  write_csv(dir, {t.sub}, 2, 2.0);
}

Outcome criterion_7(const fs::path& dir) {
  const auto t = tube7_run(1);
  tube7_write(dir, t);
  const auto& a = t.est.curve[2];
  const auto& b = t.est.curve[3];
  const double gap = std::abs(a.value - b.value);
  const double combined = std::hypot(a.std_err, b.std_err);
  const bool tail_ok = gap < 3.0 * combined;
  const bool sub_ok = t.sub.params.at("holds").get<bool>();
  std::string detail = "means";
  for (const auto& r : t.est.curve) detail += " " + num(r.value) + "+-" + num(r.std_err);
  detail += "; |m40 - m80| = " + num(gap) + " vs 3 combined stderr " + num(3.0 * combined) +
            (tail_ok ? "" : " (tail NOT stable)") + "; subadditivity gap " + num(t.sub.value) + " +- " +
            num(t.sub.std_err) + (sub_ok ? " holds" : " violated");
  return {tail_ok && sub_ok, detail};
}

// 8. Fast marching against closed forms.
Outcome criterion_8() {
  const auto dom = DomainSpec::box(2, 1.0);
  const int res = 256;
  CostGrid grid{dom, res, std::vector<double>(static_cast<std::size_t>(res) * res, 1.0), false};
  auto center = [](int r, std::size_t k, int axis) {
    return (static_cast<double>(axis == 0 ? k % static_cast<std::size_t>(r) : k / static_cast<std::size_t>(r)) + 0.5) / r;
  };
  double worst_cells = 0.0;
  for (const Point& s : {Point{0.5, 0.5}, Point{0.3, 0.45}, Point{0.01, 0.99}, Point{0.777, 0.123}}) {
    const auto field = solve_eikonal(grid, s);
    for (std::size_t k = 0; k < field.values.size(); ++k) {
      const double e = std::abs(field.values[k] - std::hypot(center(res, k, 0) - s[0], center(res, k, 1) - s[1]));
      worst_cells = std::max(worst_cells, e * res);
    }
  }

  const int res2 = 512;
  const double c1 = 1.0, c2 = 2.0;
  CostGrid two{dom, res2, std::vector<double>(static_cast<std::size_t>(res2) * res2), false};
  for (std::size_t k = 0; k < two.values.size(); ++k) two.values[k] = center(res2, k, 0) < 0.5 ? c1 : c2;
  const Point a{0.2, 0.2}, b{0.8, 0.7};
  // Crossing height on the interface x = 0.5 minimizes the travel time (golden section).
  auto travel = [&](double t) { return c1 * std::hypot(0.5 - a[0], t - a[1]) + c2 * std::hypot(b[0] - 0.5, b[1] - t); };
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
    if (travel(m1) < travel(m2)) hi = m2;
    else lo = m1;
  }
  const double exact = travel(0.5 * (lo + hi));
  const double got = solve_eikonal(two, a).at(b);
  const double rel = std::abs(got - exact) / exact;
  return {worst_cells <= 2.0 && rel <= 0.01,
          "max error " + num(worst_cells) + " cells at 256; Snell relative error " + num(rel) + " at 512"};
}

// 9. Normalized path cardinality does not trend with n.
CardinalityResult card9_run(int threads) {
  const auto dom = DomainSpec::box(2, 1.0);
  ExperimentOptions opt;
  opt.threads = threads;
  return cardinality_scaling(dom, uniform_density(dom), ConformalParams(2.0, 2), {1000, 10000, 100000},
                             {{0.3, 0.5}, {0.7, 0.5}}, 50, kSeed, opt);
}

void card9_write(const fs::path& dir, const CardinalityResult& r) {
  write_csv(dir, {r.slope}, 2, 2.0);
  write_csv(dir, r.per_n, 2, 2.0, "cardinality");
}

Outcome criterion_9(const fs::path& dir) {
  const auto r = card9_run(1);
  card9_write(dir, r);
  const bool ok = std::abs(r.slope.value) <= 2.0 * r.slope.std_err;
  std::string detail = "slope " + num(r.slope.value) + " +- " + num(r.slope.std_err) + "; means";
  for (const auto& m : r.per_n) detail += " " + num(m.value);
  return {ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// 10. Second run with a different thread count must reproduce every CSV byte for byte.
Outcome criterion_10(const fs::path& first, const fs::path& second) {
  fs::create_directories(second);
  {
    const auto recs = gw_records(2);
    write_csv(second, recs, 2, 2.0);
  }
  conv6_write(second, conv6_run(2));
  tube7_write(second, tube7_run(2));
  card9_write(second, card9_run(2));
  std::size_t files = 0, differ = 0;
  for (const auto& entry : fs::directory_iterator(first)) {
    if (entry.path().extension() != ".csv") continue;
    ++files;
    const auto other = second / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differ;
  }
  for (const auto& entry : fs::directory_iterator(second)) {
    if (entry.path().extension() == ".csv" && !fs::exists(first / entry.path().filename())) ++differ;
  }
  return {files > 0 && differ == 0, std::to_string(files) + " CSV files compared, " + std::to_string(differ) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::remove_all(out);
  const fs::path run1 = out / "run1";
  const fs::path run2 = out / "run2";
  fs::create_directories(run1);

  struct Item {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Item> items = {
      {1, "pruned equals exact", criterion_1},
      {2, "dominated edges are removable", criterion_2},
      {3, "monotonicity", criterion_3},
      {4, "p = 1 degeneracy", criterion_4},
      {5, "Galton-Watson bound", [&] { return criterion_5(run1); }},
      {6, "torus convergence, uniform vs bump", [&] { return criterion_6(run1); }},
      {7, "tube estimator self-consistency", [&] { return criterion_7(run1); }},
      {8, "eikonal accuracy", criterion_8},
      {9, "cardinality scaling", [&] { return criterion_9(run1); }},
      {10, "reproducibility", [&] { return criterion_10(run1, run2); }},
  };
  int failures = 0;
  for (const auto& item : items) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = item.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << item.id << " (" << item.name << "): " << o.detail << " ["
              << num(secs) << " s]" << std::endl;
  }
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
