#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pwsp/density.hpp"
#include "pwsp/error.hpp"
#include "pwsp/geometry.hpp"

namespace pwsp {

inline constexpr int kMinGridResolution = 8;

/// Per-cell conformal cost f^((1-p)/d) sampled at cell centers of a
/// resolution^d grid over the domain (d = 2 or 3).
struct CostGrid {
  DomainSpec domain;
  int resolution;
  std::vector<double> values;
  bool wraparound;

  double spacing(int axis) const { return domain.side(axis) / resolution; }
  std::size_t cell_count() const { return values.size(); }

  void validate() const {
    require(domain.dim() == 2 || domain.dim() == 3, ErrorKind::Unsupported,
            "Eikonal grids are limited to d = 2 or 3");
    require(resolution >= kMinGridResolution, ErrorKind::Grid, "grid resolution must be at least 8 per axis");
    std::size_t expected = 1;
    for (int i = 0; i < domain.dim(); ++i) expected *= static_cast<std::size_t>(resolution);
    require(values.size() == expected, ErrorKind::Grid, "cost grid has the wrong number of cells");
    for (double c : values) {
      require(std::isfinite(c) && c > 0.0, ErrorKind::Grid, "cost grid cells must be positive and finite");
    }
  }
};

namespace detail {

/// Calls fn(flat_index, center) for every cell in axis-0-fastest order.
inline void for_each_cell(const DomainSpec& domain, int resolution,
                          const std::function<void(std::size_t, const Point&)>& fn) {
  const int d = domain.dim();
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  Point c(static_cast<std::size_t>(d));
  std::size_t flat = 0;
  while (true) {
    for (int i = 0; i < d; ++i) {
      c[static_cast<std::size_t>(i)] = (idx[static_cast<std::size_t>(i)] + 0.5) * domain.side(i) / resolution;
    }
    fn(flat++, c);
    int axis = 0;
    while (axis < d && ++idx[static_cast<std::size_t>(axis)] == resolution) {
      idx[static_cast<std::size_t>(axis)] = 0;
      ++axis;
    }
    if (axis == d) break;
  }
}

}  // namespace detail

inline CostGrid build_cost_grid(const DomainSpec& domain, const DensityField& f, const ConformalParams& params,
                                int resolution) {
  require(domain.dim() == 2 || domain.dim() == 3, ErrorKind::Unsupported, "Eikonal grids are limited to d = 2 or 3");
  require(resolution >= kMinGridResolution, ErrorKind::Grid, "grid resolution must be at least 8 per axis");
  require(params.d() == domain.dim(), ErrorKind::Parameter, "conformal parameters and domain disagree on d");
  CostGrid g{domain, resolution, {}, domain.is_torus()};
  std::size_t cells = 1;
  for (int i = 0; i < domain.dim(); ++i) cells *= static_cast<std::size_t>(resolution);
  g.values.resize(cells);
  detail::for_each_cell(domain, resolution, [&](std::size_t k, const Point& c) {
    g.values[k] = conformal_cost(f, params, c);
  });
  g.validate();
  return g;
}

/// Arrival values u(x) of |grad u| = cost with u(source) = 0.
struct DistanceField {
  DomainSpec domain;
  int resolution;
  Point source;
  std::vector<double> values;
  /// Cells initialized directly from the source rather than by the upwind update.
  std::vector<std::uint8_t> seeded;

  double spacing(int axis) const { return domain.side(axis) / resolution; }

  std::size_t flat(const std::array<int, 3>& idx) const {
    std::size_t f = 0, stride = 1;
    for (int i = 0; i < domain.dim(); ++i) {
      f += static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]) * stride;
      stride *= static_cast<std::size_t>(resolution);
    }
    return f;
  }

  /// Multilinear interpolation between cell centers (periodic on a torus,
  /// clamped to the outermost centers in a box).
  double at(PointView x) const {
    domain.require_contains(x, "query point");
    const int d = domain.dim();
    std::array<int, 3> lo{}, hi{};
    std::array<double, 3> frac{};
    for (int i = 0; i < d; ++i) {
      double s = x[static_cast<std::size_t>(i)] / spacing(i) - 0.5;
      if (domain.is_torus()) {
        const double fl = std::floor(s);
        frac[static_cast<std::size_t>(i)] = s - fl;
        int a = static_cast<int>(fl);
        a = ((a % resolution) + resolution) % resolution;
        lo[static_cast<std::size_t>(i)] = a;
        hi[static_cast<std::size_t>(i)] = (a + 1) % resolution;
      } else {
        s = std::clamp(s, 0.0, static_cast<double>(resolution - 1));
        int a = std::min(static_cast<int>(std::floor(s)), resolution - 2);
        frac[static_cast<std::size_t>(i)] = s - a;
        lo[static_cast<std::size_t>(i)] = a;
        hi[static_cast<std::size_t>(i)] = a + 1;
      }
    }
    double total = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      std::array<int, 3> idx{};
      double w = 1.0;
      for (int i = 0; i < d; ++i) {
        const bool up = (corner >> i) & 1;
        idx[static_cast<std::size_t>(i)] = up ? hi[static_cast<std::size_t>(i)] : lo[static_cast<std::size_t>(i)];
        w *= up ? frac[static_cast<std::size_t>(i)] : 1.0 - frac[static_cast<std::size_t>(i)];
      }
      if (w != 0.0) total += w * values[flat(idx)];
    }
    return total;
  }
};

struct EikonalOptions {
  /// Cells whose centers lie within this many (largest) cell sizes of the
  /// source are initialized with straight-line values.
  double seed_radius_cells = 2.0;
};

namespace detail {

/// Upwind update: solves sum_i ((u - m_i)/h_i)^2 = c^2 over the axes whose
/// smallest neighbor value m_i lies below the resulting u.
inline double eikonal_update(std::array<double, 3> m, std::array<double, 3> h, int d, double cost) {
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.begin() + d, [&](int a, int b) { return m[static_cast<std::size_t>(a)] < m[static_cast<std::size_t>(b)]; });
  double a = 0.0, b = 0.0, c = -cost * cost;
  double u = std::numeric_limits<double>::infinity();
  for (int k = 0; k < d; ++k) {
    const auto ax = static_cast<std::size_t>(order[static_cast<std::size_t>(k)]);
    const double mk = m[ax];
    if (!std::isfinite(mk) || mk >= u) break;
    const double w = 1.0 / (h[ax] * h[ax]);
    a += w;
    b += -2.0 * mk * w;
    c += mk * mk * w;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) break;
    u = (-b + std::sqrt(disc)) / (2.0 * a);
  }
  return u;
}

struct GridTopology {
  int d;
  int res;
  bool wrap;
  std::array<std::size_t, 3> stride{1, 1, 1};

  GridTopology(int d_, int res_, bool wrap_) : d(d_), res(res_), wrap(wrap_) {
    for (int i = 1; i < d; ++i) stride[static_cast<std::size_t>(i)] = stride[static_cast<std::size_t>(i - 1)] * static_cast<std::size_t>(res);
  }

  int coord(std::size_t cell, int axis) const {
    return static_cast<int>((cell / stride[static_cast<std::size_t>(axis)]) % static_cast<std::size_t>(res));
  }

  /// Neighbor along an axis in direction +-1, or npos outside a box.
  std::size_t neighbor(std::size_t cell, int axis, int dir) const {
    const int c = coord(cell, axis);
    int n = c + dir;
    if (n < 0 || n >= res) {
      if (!wrap) return std::numeric_limits<std::size_t>::max();
      n = (n + res) % res;
    }
    const auto s = stride[static_cast<std::size_t>(axis)];
    return cell - static_cast<std::size_t>(c) * s + static_cast<std::size_t>(n) * s;
  }
};

inline std::array<double, 3> neighbor_minima(const GridTopology& topo, const std::vector<double>& u,
                                             const std::vector<std::uint8_t>* known, std::size_t cell) {
  std::array<double, 3> m{};
  m.fill(std::numeric_limits<double>::infinity());
  for (int ax = 0; ax < topo.d; ++ax) {
    for (int dir : {-1, 1}) {
      const auto nb = topo.neighbor(cell, ax, dir);
      if (nb == std::numeric_limits<std::size_t>::max()) continue;
      if (known && !(*known)[nb]) continue;
      m[static_cast<std::size_t>(ax)] = std::min(m[static_cast<std::size_t>(ax)], u[nb]);
    }
  }
  return m;
}

}  // namespace detail

/// First-order fast marching from a point source.
inline DistanceField solve_eikonal(const CostGrid& grid, PointView source, const EikonalOptions& opt = {}) {
  grid.validate();
  grid.domain.require_contains(source, "source");
  const int d = grid.domain.dim();
  const detail::GridTopology topo(d, grid.resolution, grid.wraparound);
  const std::size_t n = grid.values.size();
  std::array<double, 3> h{1, 1, 1};
  double hmax = 0.0;
  for (int i = 0; i < d; ++i) {
    h[static_cast<std::size_t>(i)] = grid.spacing(i);
    hmax = std::max(hmax, h[static_cast<std::size_t>(i)]);
  }

  DistanceField field{grid.domain, grid.resolution, Point(source.begin(), source.end()),
                      std::vector<double>(n, std::numeric_limits<double>::infinity()), std::vector<std::uint8_t>(n, 0)};
  std::vector<std::uint8_t> known(n, 0);

  // Cell holding the source; its cost stands in for the cost at the source.
  std::size_t src = 0;
  for (int i = 0; i < d; ++i) {
    int c = static_cast<int>(source[static_cast<std::size_t>(i)] / h[static_cast<std::size_t>(i)]);
    c = std::clamp(c, 0, grid.resolution - 1);
    src += static_cast<std::size_t>(c) * topo.stride[static_cast<std::size_t>(i)];
  }
  const double src_cost = grid.values[src];

  const double seed_r = std::max(opt.seed_radius_cells, 0.0) * hmax;
  for (std::size_t k = 0; k < n; ++k) {
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) {
      const double c = (topo.coord(k, i) + 0.5) * h[static_cast<std::size_t>(i)];
      const double t = grid.domain.displacement(i, source[static_cast<std::size_t>(i)], c);
      r2 += t * t;
    }
    const double r = std::sqrt(r2);
    if (k == src || r <= seed_r) {
      field.values[k] = 0.5 * (src_cost + grid.values[k]) * r;
      field.seeded[k] = 1;
      known[k] = 1;
    }
  }

  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  auto update = [&](std::size_t cell) {
    const auto m = detail::neighbor_minima(topo, field.values, &known, cell);
    const double u = detail::eikonal_update(m, h, d, grid.values[cell]);
    if (u < field.values[cell]) {
      field.values[cell] = u;
      heap.push({u, cell});
    }
  };
  for (std::size_t k = 0; k < n; ++k) {
    if (!known[k]) continue;
    for (int ax = 0; ax < d; ++ax) {
      for (int dir : {-1, 1}) {
        const auto nb = topo.neighbor(k, ax, dir);
        if (nb != std::numeric_limits<std::size_t>::max() && !known[nb]) update(nb);
      }
    }
  }
  while (!heap.empty()) {
    const auto [u, cell] = heap.top();
    heap.pop();
    if (known[cell] || u != field.values[cell]) continue;
    known[cell] = 1;
    for (int ax = 0; ax < d; ++ax) {
      for (int dir : {-1, 1}) {
        const auto nb = topo.neighbor(cell, ax, dir);
        if (nb != std::numeric_limits<std::size_t>::max() && !known[nb]) update(nb);
      }
    }
  }
  return field;
}

/// Largest |u - update(neighbors)| over cells not seeded from the source.
inline double eikonal_residual(const CostGrid& grid, const DistanceField& field) {
  const int d = grid.domain.dim();
  const detail::GridTopology topo(d, grid.resolution, grid.wraparound);
  std::array<double, 3> h{1, 1, 1};
  for (int i = 0; i < d; ++i) h[static_cast<std::size_t>(i)] = grid.spacing(i);
  double worst = 0.0;
  for (std::size_t k = 0; k < field.values.size(); ++k) {
    if (field.seeded[k]) continue;
    const auto m = detail::neighbor_minima(topo, field.values, nullptr, k);
    worst = std::max(worst, std::abs(detail::eikonal_update(m, h, d, grid.values[k]) - field.values[k]));
  }
  return worst;
}

struct DistPResult {
  double value = 0.0;
  double error_estimate = 0.0;
  double coarse_value = 0.0;
  bool refinement_warning = false;
  /// Constant cost: the value is cost * dist_1 in closed form.
  bool closed_form = false;
};

/// Sandwich dist_1 (sup f)^((1-p)/d) <= dist_p <= dist_1 (inf f)^((1-p)/d)
/// from the declared global density bounds.
inline std::pair<double, double> dist_p_bounds(const DomainSpec& domain, const DensityField& f,
                                               const ConformalParams& params, PointView x, PointView y) {
  const double d1 = base_distance(domain, x, y);
  if (params.p() == 1.0) return {d1, d1};
  return {d1 * std::pow(f.sup_bound(), params.cost_exponent()), d1 * std::pow(f.inf_bound(), params.cost_exponent())};
}

/// dist_p(x, y) from fast marching at `resolution` and `resolution / 2`.
/// The error estimate is the refinement gap |fine - coarse|.
inline DistPResult dist_p(const DomainSpec& domain, const DensityField& f, const ConformalParams& params, PointView x,
                          PointView y, int resolution, double relative_cap = 0.02) {
  require(resolution >= kMinGridResolution, ErrorKind::Grid, "grid resolution must be at least 8 per axis");
  require(params.d() == domain.dim(), ErrorKind::Parameter, "conformal parameters and domain disagree on d");
  DistPResult r;
  if (params.p() == 1.0 || f.is_constant()) {
    const double d1 = base_distance(domain, x, y);
    const double cost = params.p() == 1.0 ? 1.0 : std::pow(f.inf_bound(), params.cost_exponent());
    r.value = r.coarse_value = cost * d1;
    r.closed_form = true;
    return r;
  }
  require(domain.dim() <= 3, ErrorKind::Unsupported, "dist_p needs a grid, refused for d > 3; use dist_p_bounds");
  domain.require_contains(y, "target");
  const auto fine = solve_eikonal(build_cost_grid(domain, f, params, resolution), x);
  r.value = fine.at(y);
  const int coarse_res = std::max(kMinGridResolution, resolution / 2);
  const auto coarse = solve_eikonal(build_cost_grid(domain, f, params, coarse_res), x);
  r.coarse_value = coarse.at(y);
  r.error_estimate = std::abs(r.value - r.coarse_value);
  r.refinement_warning = r.error_estimate > relative_cap * std::abs(r.value);
  return r;
}

/// Raw binary64 values (native byte order, axis 0 fastest) plus a JSON sidecar.
inline void write_distance_field(const DistanceField& field, const std::string& bin_path, const std::string& json_path) {
  std::ofstream bin(bin_path, std::ios::binary);
  require(static_cast<bool>(bin), ErrorKind::Io, "cannot open " + bin_path);
  bin.write(reinterpret_cast<const char*>(field.values.data()),
            static_cast<std::streamsize>(field.values.size() * sizeof(double)));
  require(static_cast<bool>(bin), ErrorKind::Io, "failed writing " + bin_path);
  nlohmann::json side{{"resolution", field.resolution},
                      {"domain", {{"kind", to_string(field.domain.kind())}, {"d", field.domain.dim()}, {"sides", field.domain.sides()}}},
                      {"source", field.source},
                      {"dtype", "float64"},
                      {"order", "axis0-fastest"}};
  std::ofstream js(json_path);
  require(static_cast<bool>(js), ErrorKind::Io, "cannot open " + json_path);
  js << side.dump(2) << '\n';
}

}  // namespace pwsp
