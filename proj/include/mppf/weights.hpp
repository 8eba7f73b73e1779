#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mppf/error.hpp"

namespace mppf {

inline double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

/// Shift log-weights so that sum(exp) = 1; returns the log normalizer.
inline double normalize_log_weights(std::span<double> lw) {
  for (double v : lw)
    if (std::isnan(v)) throw FilterDegeneracy("NaN log-weight");
  const double z = log_sum_exp(lw);
  if (!std::isfinite(z))
    throw FilterDegeneracy("all " + std::to_string(lw.size()) + " particle weights vanished");
  for (double& v : lw) v -= z;
  return z;
}

inline std::vector<double> weights_from_log(std::span<const double> lw) {
  std::vector<double> w(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) w[i] = std::exp(lw[i]);
  return w;
}

/// 1 / sum w^2 for normalized log-weights.
inline double effective_sample_size(std::span<const double> normalized_lw) {
  double s = 0.0;
  for (double v : normalized_lw) s += std::exp(2.0 * v);
  return 1.0 / s;
}

/// Systematic resampling: ancestor indices for offsets (u0 + k) / L, u0 in [0, 1).
inline std::vector<std::size_t> systematic_resample(std::span<const double> weights, double u0) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> idx(n);
  double total = 0.0;
  for (double w : weights) total += w;
  double cum = weights.empty() ? 0.0 : weights[0] / total;
  std::size_t i = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double u = (u0 + static_cast<double>(k)) / static_cast<double>(n);
    while (u >= cum && i + 1 < n) cum += weights[++i] / total;
    idx[k] = i;
  }
  return idx;
}

}  // namespace mppf
