#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mppf/error.hpp"

namespace mppf {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned rectangle [x0, x1) x [y0, y1).
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double diameter() const { return std::hypot(width(), height()); }
  Point center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  bool interior(Point p) const { return p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1; }
};

inline bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

inline int log2_exact(long n) {
  int k = 0;
  while ((1L << k) < n) ++k;
  return k;
}

/// Square dyadic grid over [0, side]^2.
class GridDomain {
 public:
  GridDomain() = default;
  GridDomain(int width_cells, int height_cells, double physical_side = 1.0)
      : width_(width_cells), height_(height_cells), side_(physical_side) {
    if (width_ != height_)
      throw ConfigError("grid must be square, got " + std::to_string(width_) + "x" +
                        std::to_string(height_));
    if (!is_power_of_two(width_))
      throw ConfigError("grid side must be a power of two, got " + std::to_string(width_));
    if (!(side_ > 0.0) || !std::isfinite(side_))
      throw ConfigError("physical_side must be positive and finite");
  }

  int width_cells() const { return width_; }
  int height_cells() const { return height_; }
  int cell_count() const { return width_ * height_; }
  double physical_side() const { return side_; }
  double cell_side() const { return side_ / width_; }
  double cell_area() const { return (side_ / width_) * (side_ / height_); }
  double area() const { return side_ * side_; }
  /// Number of levels in the dissecting system (1x1 up to width x width).
  int level_count() const { return log2_exact(width_) + 1; }

  friend bool operator==(const GridDomain&, const GridDomain&) = default;

 private:
  int width_ = 1;
  int height_ = 1;
  double side_ = 1.0;
};

/// One level of the dissecting system: n x n equal square cells, row-major
/// with index = iy * n + ix, iy counting upward from y = 0.
class PartitionLevel {
 public:
  PartitionLevel() = default;
  PartitionLevel(int cells_per_side, double physical_side)
      : n_(cells_per_side), side_(physical_side) {
    if (!is_power_of_two(n_))
      throw ConfigError("partition side must be a power of two, got " + std::to_string(n_));
    if (!(side_ > 0.0)) throw ConfigError("physical_side must be positive");
  }

  int cells_per_side() const { return n_; }
  int size() const { return n_ * n_; }
  double physical_side() const { return side_; }
  double cell_side() const { return side_ / n_; }
  double cell_area() const { return cell_side() * cell_side(); }
  double max_diameter() const { return std::sqrt(2.0) * cell_side(); }

  Rect cell(int i) const {
    check_index(i);
    const int ix = i % n_;
    const int iy = i / n_;
    const double h = cell_side();
    // Outer edges use the exact side length so the union covers the domain.
    return {ix * h, iy * h, ix + 1 == n_ ? side_ : (ix + 1) * h, iy + 1 == n_ ? side_ : (iy + 1) * h};
  }

  Point representative(int i) const { return cell(i).center(); }

  std::vector<Rect> cells() const {
    std::vector<Rect> out;
    out.reserve(size());
    for (int i = 0; i < size(); ++i) out.push_back(cell(i));
    return out;
  }

  std::vector<Point> representatives() const {
    std::vector<Point> out;
    out.reserve(size());
    for (int i = 0; i < size(); ++i) out.push_back(representative(i));
    return out;
  }

  friend bool operator==(const PartitionLevel&, const PartitionLevel&) = default;

 private:
  void check_index(int i) const {
    if (i < 0 || i >= size()) throw DomainError("cell index out of range: " + std::to_string(i));
  }

  int n_ = 1;
  double side_ = 1.0;
};

/// Levels 1x1, 2x2, ..., width x width.
inline std::vector<PartitionLevel> build_dissecting_system(const GridDomain& domain) {
  if (!is_power_of_two(domain.width_cells()) || domain.width_cells() != domain.height_cells())
    throw ConfigError("dissecting system requires a square power-of-two grid");
  std::vector<PartitionLevel> levels;
  for (int n = 1; n <= domain.width_cells(); n *= 2)
    levels.emplace_back(n, domain.physical_side());
  return levels;
}

inline PartitionLevel finest_level(const GridDomain& domain) {
  return PartitionLevel(domain.width_cells(), domain.physical_side());
}

inline bool is_ancestor(const PartitionLevel& fine, const PartitionLevel& coarse) {
  return fine.physical_side() == coarse.physical_side() &&
         coarse.cells_per_side() <= fine.cells_per_side() &&
         fine.cells_per_side() % coarse.cells_per_side() == 0;
}

/// Fine-cell index -> coarse-cell index.
inline std::vector<int> downscale_map(const PartitionLevel& fine, const PartitionLevel& coarse) {
  if (!is_ancestor(fine, coarse))
    throw DomainError("level " + std::to_string(coarse.cells_per_side()) +
                      " is not an ancestor of level " + std::to_string(fine.cells_per_side()));
  const int nf = fine.cells_per_side();
  const int f = nf / coarse.cells_per_side();
  const int nc = coarse.cells_per_side();
  std::vector<int> map(fine.size());
  for (int iy = 0; iy < nf; ++iy)
    for (int ix = 0; ix < nf; ++ix) map[iy * nf + ix] = (iy / f) * nc + ix / f;
  return map;
}

/// Half-open cells [a, b) x [c, d); the top and right edges of the domain are closed.
inline int cell_of_point(const PartitionLevel& level, Point p) {
  const double s = level.physical_side();
  if (!(p.x >= 0.0 && p.x <= s && p.y >= 0.0 && p.y <= s))
    throw DomainError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                      ") outside the mark space");
  const int n = level.cells_per_side();
  auto axis = [&](double v) {
    int k = std::clamp(static_cast<int>(std::floor(v / s * n)), 0, n - 1);
    // Guard against rounding at interior edges: enforce lo <= v < hi.
    const double h = level.cell_side();
    if (k > 0 && v < k * h) --k;
    if (k < n - 1 && v >= (k + 1) * h) ++k;
    return std::clamp(k, 0, n - 1);
  };
  return axis(p.y) * n + axis(p.x);
}

/// Observed subset of partition cells.
class PartialMask {
 public:
  PartialMask() = default;
  PartialMask(std::vector<int> observed, int cell_count) : n_(cell_count), observed_(std::move(observed)) {
    if (observed_.empty()) throw DomainError("partial mask must observe at least one cell");
    std::sort(observed_.begin(), observed_.end());
    observed_.erase(std::unique(observed_.begin(), observed_.end()), observed_.end());
    if (observed_.front() < 0 || observed_.back() >= n_)
      throw DomainError("partial mask index outside partition of size " + std::to_string(n_));
  }

  static PartialMask full(int cell_count) {
    std::vector<int> all(cell_count);
    for (int i = 0; i < cell_count; ++i) all[i] = i;
    return PartialMask(std::move(all), cell_count);
  }

  int cell_count() const { return n_; }
  const std::vector<int>& observed() const { return observed_; }
  bool contains(int i) const { return std::binary_search(observed_.begin(), observed_.end(), i); }
  double fraction() const { return static_cast<double>(observed_.size()) / n_; }

  std::vector<int> complement() const {
    std::vector<int> out;
    for (int i = 0; i < n_; ++i)
      if (!contains(i)) out.push_back(i);
    return out;
  }

 private:
  int n_ = 0;
  std::vector<int> observed_;
};

}  // namespace mppf
