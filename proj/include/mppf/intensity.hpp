#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mppf/error.hpp"
#include "mppf/grid.hpp"
#include "mppf/signal.hpp"

namespace mppf {

enum class IntensityKind { kPixelwiseSquare, kCoxExample };

inline std::string to_string(IntensityKind k) {
  return k == IntensityKind::kPixelwiseSquare ? "pixelwise-square" : "cox-example";
}

inline IntensityKind parse_intensity_kind(const std::string& s) {
  if (s == "pixelwise-square") return IntensityKind::kPixelwiseSquare;
  if (s == "cox-example") return IntensityKind::kCoxExample;
  throw ConfigError("unknown intensity kind: " + s);
}

/// Rate density clamp(e^{-a t} (c u)^2, floor, c_max), or the Cox example
/// max(||u||_H + c1, c2) * phi(u) with a box-mollified, normalized phi.
struct IntensitySpec {
  IntensityKind kind = IntensityKind::kPixelwiseSquare;
  double decay = 0.0;
  double scale = 10.0;
  double c_max = 1e6;
  double floor = 1e-3;
  double c1 = 1.0;
  double c2 = 1.0;
  int mollifier_radius = 1;  // cells

  void validate() const {
    if (decay < 0.0) throw ConfigError("intensity decay must be >= 0");
    if (!(scale > 0.0)) throw ConfigError("intensity scale must be > 0");
    if (!(floor > 0.0)) throw ConfigError("intensity floor must be > 0");
    if (!(c_max >= floor)) throw ConfigError("intensity c_max must be >= floor");
    if (kind == IntensityKind::kCoxExample) {
      if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("cox-example needs c1, c2 > 0");
      if (mollifier_radius < 1) throw ConfigError("cox-example mollifier radius must be >= 1 cell");
    }
  }

  friend bool operator==(const IntensitySpec&, const IntensitySpec&) = default;
};

/// Per-cell rates (density times cell area) on the signal grid, written into `out`.
inline void eval_intensity(const IntensitySpec& spec, const FieldState& state, double cell_area,
                           double t, std::span<double> out) {
  const std::size_t n = state.u.size();
  if (spec.kind == IntensityKind::kPixelwiseSquare) {
    const double g = std::exp(-spec.decay * t);
    for (std::size_t i = 0; i < n; ++i) {
      const double cu = spec.scale * state.u[i];
      out[i] = std::clamp(g * cu * cu, spec.floor, spec.c_max) * cell_area;
    }
    return;
  }
  const int w = state.width;
  const int h = state.height;
  const int r = spec.mollifier_radius;
  double norm2 = 0.0;
  for (double x : state.u) norm2 += x * x * cell_area;
  const double ground = std::max(std::sqrt(norm2) + spec.c1, spec.c2);
  double total = 0.0;
  for (int iy = 0; iy < h; ++iy) {
    for (int ix = 0; ix < w; ++ix) {
      double acc = 0.0;
      int cnt = 0;
      for (int jy = std::max(0, iy - r); jy <= std::min(h - 1, iy + r); ++jy)
        for (int jx = std::max(0, ix - r); jx <= std::min(w - 1, ix + r); ++jx) {
          acc += std::max(state.u[jy * w + jx], 0.0);
          ++cnt;
        }
      out[iy * w + ix] = acc / cnt;
      total += acc / cnt;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = total > 0.0 ? out[i] / total : 1.0 / static_cast<double>(n);
    out[i] = std::clamp(ground * phi / cell_area, spec.floor, spec.c_max) * cell_area;
  }
}

inline std::vector<double> eval_intensity(const IntensitySpec& spec, const FieldState& state,
                                          const GridDomain& grid, double t) {
  std::vector<double> out(state.u.size());
  eval_intensity(spec, state, grid.cell_area(), t, out);
  return out;
}

/// Sum fine-cell values into coarse cells through a downscale map.
inline void coarsen(std::span<const double> fine, const std::vector<int>& map, std::span<double> coarse) {
  std::fill(coarse.begin(), coarse.end(), 0.0);
  for (std::size_t i = 0; i < fine.size(); ++i) coarse[map[i]] += fine[i];
}

}  // namespace mppf
