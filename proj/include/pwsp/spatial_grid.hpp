#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pwsp/error.hpp"
#include "pwsp/geometry.hpp"

namespace pwsp {

/// Uniform bucket grid over a fixed point set, stored in CSR form.
///
/// Ball queries enumerate every bucket that meets the ball's bounding box
/// (with per-axis wraparound on a torus, each bucket at most once); callers
/// do the exact distance filtering.
class CellGrid {
 public:
  CellGrid(const DomainSpec& domain, const std::vector<double>& coords, double cell_side)
      : domain_(domain), dim_(domain.dim()) {
    const auto d = static_cast<std::size_t>(dim_);
    const std::size_t count = coords.size() / d;
    for (double c : coords) require(std::isfinite(c), ErrorKind::Index, "non-finite coordinate in spatial index input");
    require(std::isfinite(cell_side) && cell_side > 0.0, ErrorKind::Index, "cell side must be positive and finite");

    // Keep the bucket count within a small multiple of the point count.
    const double max_cells = 4.0 * static_cast<double>(count) + 64.0;
    while (true) {
      double total = 1.0;
      for (int i = 0; i < dim_; ++i) total *= std::max(1.0, std::floor(domain.side(i) / cell_side));
      if (total <= max_cells) break;
      cell_side *= 1.25;
    }
    cells_.resize(d);
    width_.resize(d);
    stride_.resize(d);
    std::size_t total = 1;
    for (int i = 0; i < dim_; ++i) {
      const auto n = static_cast<int>(std::max(1.0, std::floor(domain.side(i) / cell_side)));
      cells_[static_cast<std::size_t>(i)] = n;
      width_[static_cast<std::size_t>(i)] = domain.side(i) / n;
      stride_[static_cast<std::size_t>(i)] = total;
      total *= static_cast<std::size_t>(n);
    }

    start_.assign(total + 1, 0);
    std::vector<std::size_t> home(count);
    for (std::size_t k = 0; k < count; ++k) {
      home[k] = cell_of(coords.data() + k * d);
      ++start_[home[k] + 1];
    }
    for (std::size_t c = 0; c < total; ++c) start_[c + 1] += start_[c];
    items_.resize(count);
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t k = 0; k < count; ++k) items_[fill[home[k]]++] = static_cast<std::uint32_t>(k);
  }

  std::size_t cell_count() const noexcept { return start_.size() - 1; }

  /// Calls fn(k) for every point k in a bucket meeting the bounding box of
  /// the ball B(center, radius).
  template <class Fn>
  void for_each_candidate(const double* center, double radius, Fn&& fn) const {
    const auto d = static_cast<std::size_t>(dim_);
    int lo[8], hi[8], cur[8];
    std::vector<int> lo_v, hi_v, cur_v;
    int* plo = lo;
    int* phi = hi;
    int* pcur = cur;
    if (d > 8) {
      lo_v.resize(d);
      hi_v.resize(d);
      cur_v.resize(d);
      plo = lo_v.data();
      phi = hi_v.data();
      pcur = cur_v.data();
    }
    for (std::size_t i = 0; i < d; ++i) {
      const int n = cells_[i];
      int a = static_cast<int>(std::floor((center[i] - radius) / width_[i]));
      int b = static_cast<int>(std::floor((center[i] + radius) / width_[i]));
      if (domain_.is_torus()) {
        if (b - a + 1 >= n) {
          a = 0;
          b = n - 1;
        }
      } else {
        a = std::max(a, 0);
        b = std::min(b, n - 1);
        if (a > b) return;
      }
      plo[i] = a;
      phi[i] = b;
      pcur[i] = a;
    }
    while (true) {
      std::size_t cell = 0;
      for (std::size_t i = 0; i < d; ++i) {
        int c = pcur[i];
        const int n = cells_[i];
        if (c < 0) c += n;
        else if (c >= n) c -= n;
        cell += static_cast<std::size_t>(c) * stride_[i];
      }
      for (std::size_t s = start_[cell]; s < start_[cell + 1]; ++s) fn(static_cast<std::size_t>(items_[s]));
      std::size_t axis = 0;
      while (axis < d && ++pcur[axis] > phi[axis]) {
        pcur[axis] = plo[axis];
        ++axis;
      }
      if (axis == d) break;
    }
  }

 private:
  std::size_t cell_of(const double* x) const {
    std::size_t cell = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(dim_); ++i) {
      int c = static_cast<int>(x[i] / width_[i]);
      c = std::clamp(c, 0, cells_[i] - 1);
      cell += static_cast<std::size_t>(c) * stride_[i];
    }
    return cell;
  }

  DomainSpec domain_;
  int dim_;
  std::vector<int> cells_;
  std::vector<double> width_;
  std::vector<std::size_t> stride_;
  std::vector<std::size_t> start_;
  std::vector<std::uint32_t> items_;
};

}  // namespace pwsp
