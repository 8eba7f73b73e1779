#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "mppf/error.hpp"
#include "mppf/signal.hpp"

namespace mppf {

/// Root mean square difference of u over all pixels.
inline double rmse(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size() || estimate.empty()) throw DomainError("rmse: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate[i] - truth[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(estimate.size()));
}

inline double rmse(const FieldState& estimate, const FieldState& truth) {
  if (estimate.width != truth.width || estimate.height != truth.height) throw DomainError("rmse: shape mismatch");
  return rmse(estimate.u, truth.u);
}

/// Per-step spatial root mean square error.
inline std::vector<double> mse_series(std::span<const FieldState> estimates, std::span<const FieldState> truth) {
  if (estimates.size() != truth.size()) throw DomainError("mse_series: step counts differ");
  std::vector<double> out;
  out.reserve(estimates.size());
  for (std::size_t j = 0; j < estimates.size(); ++j) out.push_back(rmse(estimates[j], truth[j]));
  return out;
}

inline double mean(std::span<const double> x) {
  if (x.empty()) throw DomainError("mean of empty range");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Mean over the last quarter of a series.
inline double final_quarter_mean(std::span<const double> x) {
  const std::size_t start = x.size() - std::max<std::size_t>(1, x.size() / 4);
  return mean(x.subspan(start));
}

struct PoissonFit {
  double lambda_hat = 0.0;
  double chi2_p = 1.0;
  double lag1 = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  std::size_t samples = 0;
  bool degenerate = false;  // too few bins for a test (e.g. all-zero data); p reported as 1
};

inline constexpr std::size_t kMinPoissonSamples = 1000;

/// Pooled Poisson fit of frame-major counts (`pixels` values per frame):
/// chi-square goodness of fit against Poisson(mean) with adjacent bins merged
/// until every expected count is at least 5, plus the pooled lag-1
/// autocorrelation of the per-pixel time series.
inline PoissonFit poisson_fit_report(std::span<const std::uint32_t> counts, std::size_t pixels) {
  if (pixels == 0 || counts.size() % pixels != 0) throw DomainError("counts are not a whole number of frames");
  if (counts.size() < kMinPoissonSamples)
    throw DomainError("poisson fit needs at least " + std::to_string(kMinPoissonSamples) + " samples, got " +
                      std::to_string(counts.size()));
  PoissonFit r;
  r.samples = counts.size();
  const double n = static_cast<double>(counts.size());
  std::uint32_t kmax = 0;
  double sum = 0.0;
  for (std::uint32_t c : counts) {
    sum += c;
    kmax = std::max(kmax, c);
  }
  r.lambda_hat = sum / n;

  const std::size_t frames = counts.size() / pixels;
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) {
    double m = 0.0;
    for (std::size_t j = 0; j < frames; ++j) m += counts[j * pixels + p];
    m /= static_cast<double>(frames);
    for (std::size_t j = 0; j < frames; ++j) {
      const double d = counts[j * pixels + p] - m;
      den += d * d;
      if (j + 1 < frames) num += d * (counts[(j + 1) * pixels + p] - m);
    }
  }
  r.lag1 = den > 0.0 ? num / den : 0.0;

  if (r.lambda_hat <= 0.0) {
    r.degenerate = true;
    return r;
  }
  const boost::math::poisson_distribution<double> pois(r.lambda_hat);
  std::vector<double> observed(kmax + 2, 0.0);
  for (std::uint32_t c : counts) observed[c] += 1.0;
  // Candidate bins k = 0..kmax, plus an open upper tail k > kmax.
  std::vector<double> expected(kmax + 2);
  for (std::uint32_t k = 0; k <= kmax; ++k) expected[k] = n * boost::math::pdf(pois, k);
  expected[kmax + 1] = n * boost::math::cdf(boost::math::complement(pois, static_cast<double>(kmax)));

  std::vector<double> bo, be;
  double acc_o = 0.0, acc_e = 0.0;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    acc_o += observed[k];
    acc_e += expected[k];
    if (acc_e >= 5.0) {
      bo.push_back(acc_o);
      be.push_back(acc_e);
      acc_o = acc_e = 0.0;
    }
  }
  if (acc_e > 0.0 || acc_o > 0.0) {
    if (be.empty()) {
      bo.push_back(acc_o);
      be.push_back(acc_e);
    } else {
      bo.back() += acc_o;
      be.back() += acc_e;
    }
  }
  r.dof = static_cast<int>(be.size()) - 2;  // one constraint plus one fitted parameter
  if (r.dof < 1) {
    r.degenerate = true;
    return r;
  }
  for (std::size_t i = 0; i < be.size(); ++i) r.chi2 += (bo[i] - be[i]) * (bo[i] - be[i]) / be[i];
  r.chi2_p = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(r.dof), r.chi2));
  return r;
}

}  // namespace mppf
