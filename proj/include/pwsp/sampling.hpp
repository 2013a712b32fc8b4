#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pwsp/density.hpp"
#include "pwsp/error.hpp"
#include "pwsp/geometry.hpp"
#include "pwsp/rng.hpp"

namespace pwsp {

enum class GeneratorTag { IID, Poisson, Thinned, Loaded };

inline const char* to_string(GeneratorTag t) {
  switch (t) {
    case GeneratorTag::IID: return "iid";
    case GeneratorTag::Poisson: return "poisson";
    case GeneratorTag::Thinned: return "thinned";
    case GeneratorTag::Loaded: return "loaded";
  }
  return "unknown";
}

/// Ordered point set stored row-major; immutable once built.
class PointCloud {
 public:
  PointCloud(DomainSpec domain, std::vector<double> coords, std::uint64_t seed, GeneratorTag tag)
      : domain_(std::move(domain)), coords_(std::move(coords)), seed_(seed), tag_(tag) {
    const auto d = static_cast<std::size_t>(domain_.dim());
    require(coords_.size() % d == 0, ErrorKind::Domain, "coordinate buffer is not a multiple of the dimension");
    for (std::size_t i = 0; i < size(); ++i) domain_.require_contains(point(i), "cloud point");
  }

  static PointCloud empty(DomainSpec domain, std::uint64_t seed = 0) {
    return PointCloud(std::move(domain), {}, seed, GeneratorTag::IID);
  }

  const DomainSpec& domain() const noexcept { return domain_; }
  int dim() const noexcept { return domain_.dim(); }
  std::size_t size() const noexcept { return coords_.size() / static_cast<std::size_t>(domain_.dim()); }
  bool empty() const noexcept { return coords_.empty(); }
  PointView point(std::size_t i) const noexcept {
    const auto d = static_cast<std::size_t>(domain_.dim());
    return PointView(coords_.data() + i * d, d);
  }
  const std::vector<double>& coords() const noexcept { return coords_; }
  std::uint64_t seed() const noexcept { return seed_; }
  GeneratorTag tag() const noexcept { return tag_; }

  /// Subset in the order of `keep` (indices must be valid).
  PointCloud select(const std::vector<std::size_t>& keep, GeneratorTag tag) const {
    const auto d = static_cast<std::size_t>(dim());
    std::vector<double> out;
    out.reserve(keep.size() * d);
    for (auto i : keep) out.insert(out.end(), coords_.begin() + static_cast<std::ptrdiff_t>(i * d),
                                   coords_.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    return PointCloud(domain_, std::move(out), seed_, tag);
  }

 private:
  DomainSpec domain_;
  std::vector<double> coords_;
  std::uint64_t seed_;
  GeneratorTag tag_;
};

namespace detail {

inline void uniform_point(const DomainSpec& domain, Philox& rng, double* out) {
  for (int i = 0; i < domain.dim(); ++i) out[i] = rng.uniform() * domain.side(i);
}

inline std::uint64_t poisson_count(double mean, Philox& rng) {
  if (mean <= 0.0) return 0;
  std::poisson_distribution<std::int64_t> dist(mean);
  return static_cast<std::uint64_t>(dist(rng));
}

}  // namespace detail

/// n i.i.d. draws from f by rejection against the uniform proposal with
/// envelope f_M. Throws DensityContract if f exceeds its declared bound.
inline PointCloud sample_iid(const DensityField& f, const DomainSpec& domain, std::size_t n, std::uint64_t seed,
                             std::uint64_t stream = 0) {
  const auto d = static_cast<std::size_t>(domain.dim());
  std::vector<double> coords(n * d);
  Philox rng(seed, stream);
  const double envelope = f.sup_bound();
  for (std::size_t k = 0; k < n; ++k) {
    double* x = coords.data() + k * d;
    while (true) {
      detail::uniform_point(domain, rng, x);
      const double fx = f(PointView(x, d));
      if (fx > envelope) fail(ErrorKind::DensityContract, "density exceeds its declared sup bound f_M");
      if (fx < f.inf_bound()) fail(ErrorKind::DensityContract, "density is below its declared inf bound f_m");
      if (rng.uniform() * envelope < fx) break;
    }
  }
  return PointCloud(domain, std::move(coords), seed, GeneratorTag::IID);
}

/// Homogeneous Poisson process of intensity lambda on the whole domain.
inline PointCloud sample_poisson(double lambda, const DomainSpec& domain, std::uint64_t seed, std::uint64_t stream = 0) {
  require(std::isfinite(lambda) && lambda > 0.0, ErrorKind::Parameter, "Poisson intensity must be positive");
  Philox rng(seed, stream);
  const auto n = detail::poisson_count(lambda * domain.volume(), rng);
  const auto d = static_cast<std::size_t>(domain.dim());
  std::vector<double> coords(n * d);
  for (std::uint64_t k = 0; k < n; ++k) detail::uniform_point(domain, rng, coords.data() + k * d);
  return PointCloud(domain, std::move(coords), seed, GeneratorTag::Poisson);
}

/// Closed tube T(u, v; b): all points within distance b of the segment [u, v].
struct Tube {
  Point u;
  Point v;
  double radius;

  /// Tube along the first axis of length t, placed in the smallest box that
  /// holds it: u = (b, b, ...), v = (b + t, b, ...).
  static Tube along_axis(int d, double t, double b) {
    require(d >= 2, ErrorKind::Parameter, "tube dimension must be >= 2");
    require(std::isfinite(t) && t >= 0.0, ErrorKind::Parameter, "tube length must be nonnegative");
    require(std::isfinite(b) && b > 0.0, ErrorKind::Parameter, "tube radius must be positive");
    Point u(static_cast<std::size_t>(d), b);
    Point v = u;
    v[0] += t;
    return Tube{std::move(u), std::move(v), b};
  }

  /// Box domain [0, t + 2b] x [0, 2b]^(d-1) hosting `along_axis` tubes.
  static DomainSpec host_box(int d, double t, double b) {
    std::vector<double> sides(static_cast<std::size_t>(d), 2.0 * b);
    sides[0] = t + 2.0 * b;
    return DomainSpec(DomainKind::EuclideanBox, std::move(sides));
  }
};

/// Euclidean distance from x to the closed segment [u, v].
inline double point_segment_distance(PointView x, PointView u, PointView v) {
  double uv2 = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = v[i] - u[i];
    uv2 += e * e;
    dot += (x[i] - u[i]) * e;
  }
  const double s = uv2 > 0.0 ? std::clamp(dot / uv2, 0.0, 1.0) : 0.0;
  double r2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = x[i] - (u[i] + s * (v[i] - u[i]));
    r2 += t * t;
  }
  return std::sqrt(r2);
}

/// Points strictly closer than b to the closed segment [x, y], order kept.
inline PointCloud tube_restrict(const PointCloud& cloud, PointView x, PointView y, double b) {
  require(!cloud.domain().is_torus(), ErrorKind::Unsupported, "tube restriction is defined on Euclidean boxes only");
  require(std::isfinite(b) && b > 0.0, ErrorKind::Parameter, "tube radius must be positive");
  require(x.size() == static_cast<std::size_t>(cloud.dim()) && y.size() == x.size(), ErrorKind::Domain,
          "tube endpoints have the wrong dimension");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (point_segment_distance(cloud.point(i), x, y) < b) keep.push_back(i);
  }
  return cloud.select(keep, cloud.tag());
}

/// Poisson process of intensity lambda restricted to a tube hosted in `host`.
inline PointCloud sample_poisson(double lambda, const Tube& tube, const DomainSpec& host, std::uint64_t seed,
                                 std::uint64_t stream = 0) {
  require(!host.is_torus(), ErrorKind::Unsupported, "tube regions live in Euclidean boxes");
  const auto box = sample_poisson(lambda, host, seed, stream);
  return tube_restrict(box, tube.u, tube.v, tube.radius);
}

/// Keeps each point independently with probability f_m / f(X_i).
inline PointCloud thin(const PointCloud& cloud, const DensityField& f, double floor, std::uint64_t seed,
                       std::uint64_t stream = 0) {
  require(std::isfinite(floor) && floor > 0.0, ErrorKind::Parameter, "thinning floor must be positive");
  Philox rng(seed, stream);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double fx = f(cloud.point(i));
    if (fx < floor) fail(ErrorKind::DensityContract, "thinning floor exceeds the density at a cloud point");
    const double u = rng.uniform();
    if (u * fx < floor) keep.push_back(i);
  }
  return cloud.select(keep, GeneratorTag::Thinned);
}

// CSV form: "# d=<d> domain=<kind> seed=<seed>" then one point per row.

inline void write_cloud_csv(std::ostream& os, const PointCloud& cloud) {
  os << "# d=" << cloud.dim() << " domain=" << to_string(cloud.domain().kind()) << " seed=" << cloud.seed() << '\n';
  os << std::setprecision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (k) os << ',';
      os << p[k];
    }
    os << '\n';
  }
}

inline PointCloud read_cloud_csv(std::istream& is, const DomainSpec& domain) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::Io, "point cloud file is empty");
  int d = 0;
  std::string kind;
  std::uint64_t seed = 0;
  {
    std::istringstream hs(line);
    std::string hash, dtok, ktok, stok;
    hs >> hash >> dtok >> ktok >> stok;
    require(hash == "#" && dtok.rfind("d=", 0) == 0 && ktok.rfind("domain=", 0) == 0 && stok.rfind("seed=", 0) == 0,
            ErrorKind::Io, "malformed point cloud header: " + line);
    d = std::stoi(dtok.substr(2));
    kind = ktok.substr(7);
    seed = std::stoull(stok.substr(5));
  }
  require(d == domain.dim(), ErrorKind::Domain, "point cloud dimension does not match the domain");
  require(kind == to_string(domain.kind()), ErrorKind::Domain, "point cloud domain kind does not match");
  std::vector<double> coords;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    int count = 0;
    while (std::getline(ls, cell, ',')) {
      coords.push_back(std::stod(cell));
      ++count;
    }
    require(count == d, ErrorKind::Io, "point cloud row has " + std::to_string(count) + " columns");
  }
  return PointCloud(domain, std::move(coords), seed, GeneratorTag::Loaded);
}

}  // namespace pwsp
