#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mppf/error.hpp"
#include "mppf/grid.hpp"
#include "mppf/intensity.hpp"
#include "mppf/rng.hpp"
#include "mppf/signal.hpp"

namespace mppf {

inline constexpr double kMaxPoissonMean = 1e6;

/// Counts per observed cell per step. `cells` lists the partition cells that
/// are present (all of them unless a mask was applied); counts are frame-major.
struct CountFrameSeries {
  PartitionLevel partition;
  double dt = 1.0;
  std::vector<int> cells;
  std::vector<std::uint32_t> counts;

  static CountFrameSeries empty(const PartitionLevel& level, double dt) {
    CountFrameSeries s;
    s.partition = level;
    s.dt = dt;
    s.cells.resize(level.size());
    std::iota(s.cells.begin(), s.cells.end(), 0);
    return s;
  }

  std::size_t cell_count() const { return cells.size(); }
  std::size_t frame_count() const { return cells.empty() ? 0 : counts.size() / cells.size(); }
  bool is_full() const { return static_cast<int>(cells.size()) == partition.size(); }

  std::span<const std::uint32_t> frame(std::size_t j) const {
    return {counts.data() + j * cells.size(), cells.size()};
  }

  void push_frame(std::span<const std::uint32_t> f) {
    if (f.size() != cells.size()) throw DomainError("frame size does not match series cells");
    counts.insert(counts.end(), f.begin(), f.end());
  }

  std::uint64_t total_events() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }

  friend bool operator==(const CountFrameSeries&, const CountFrameSeries&) = default;
};

struct MarkedEvent {
  double time = 0.0;
  Point mark;
};

struct MarkedEventList {
  std::vector<MarkedEvent> events;
  double horizon = 0.0;

  std::size_t ground_count() const { return events.size(); }
};

/// One frame of independent Poisson(rate * dt) counts.
inline std::vector<std::uint32_t> sample_counts(std::span<const double> rates, double dt, Stream& rng) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  std::vector<std::uint32_t> out(rates.size(), 0);
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double m = rates[i] * dt;
    if (!(m >= 0.0)) throw DomainError("negative or NaN rate in cell " + std::to_string(i));
    if (m > kMaxPoissonMean)
      throw SanityError("Poisson mean " + std::to_string(m) + " exceeds limit in cell " + std::to_string(i));
    if (m > 0.0) out[i] = static_cast<std::uint32_t>(std::poisson_distribution<long>(m)(rng));
  }
  return out;
}

/// Exact-mark sampling: each state covers the step (t - dt, t]. Ground count is
/// Poisson(sum of rates * dt); the cell is drawn proportional to its rate and the
/// mark uniformly inside it; the time uniformly inside the step.
inline MarkedEventList sample_marked_events(const IntensitySpec& spec, std::span<const FieldState> path,
                                            const GridDomain& grid, double dt, Stream& rng) {
  if (path.empty()) throw DomainError("empty signal path");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const PartitionLevel level = finest_level(grid);
  MarkedEventList out;
  std::vector<double> rates(grid.cell_count());
  for (const FieldState& s : path) {
    eval_intensity(spec, s, grid.cell_area(), s.t, rates);
    const double ground = std::accumulate(rates.begin(), rates.end(), 0.0) * dt;
    if (ground > kMaxPoissonMean) throw SanityError("ground Poisson mean exceeds limit");
    const long n = ground > 0.0 ? std::poisson_distribution<long>(ground)(rng) : 0;
    if (n == 0) continue;
    std::discrete_distribution<int> pick(rates.begin(), rates.end());
    std::vector<MarkedEvent> step_events;
    step_events.reserve(n);
    for (long k = 0; k < n; ++k) {
      const Rect r = level.cell(pick(rng));
      const double x = r.x0 + rng.uniform01() * r.width();
      const double y = r.y0 + rng.uniform01() * r.height();
      const double tau = s.t - dt * rng.uniform01();
      step_events.push_back({tau, {x, y}});
    }
    std::stable_sort(step_events.begin(), step_events.end(),
                     [](const MarkedEvent& a, const MarkedEvent& b) { return a.time < b.time; });
    out.events.insert(out.events.end(), step_events.begin(), step_events.end());
  }
  out.horizon = path.back().t;
  return out;
}

/// Bin marked events into per-step cell counts; step j covers (j dt, (j+1) dt].
inline CountFrameSeries bin_events(const MarkedEventList& events, const PartitionLevel& level, double dt,
                                   std::size_t frames, double t0 = 0.0) {
  CountFrameSeries s = CountFrameSeries::empty(level, dt);
  s.counts.assign(frames * s.cells.size(), 0);
  for (const MarkedEvent& e : events.events) {
    long j = static_cast<long>(std::ceil((e.time - t0) / dt)) - 1;
    j = std::clamp<long>(j, 0, static_cast<long>(frames) - 1);
    s.counts[j * s.cells.size() + cell_of_point(level, e.mark)] += 1;
  }
  return s;
}

/// Re-embed counts as events at (end of step, representative point of the cell).
inline MarkedEventList embed_representative(const CountFrameSeries& series, double t0 = 0.0) {
  MarkedEventList out;
  const std::size_t nc = series.cell_count();
  for (std::size_t j = 0; j < series.frame_count(); ++j) {
    const double tj = t0 + static_cast<double>(j + 1) * series.dt;
    for (std::size_t k = 0; k < nc; ++k) {
      const Point p = series.partition.representative(series.cells[k]);
      for (std::uint32_t c = 0; c < series.counts[j * nc + k]; ++c) out.events.push_back({tj, p});
    }
  }
  out.horizon = t0 + static_cast<double>(series.frame_count()) * series.dt;
  return out;
}

/// Sum child counts into the coarse level. A masked series keeps every coarse
/// cell that has at least one observed child.
inline CountFrameSeries downscale_counts(const CountFrameSeries& fine, const PartitionLevel& coarse) {
  const std::vector<int> map = downscale_map(fine.partition, coarse);
  CountFrameSeries out;
  out.partition = coarse;
  out.dt = fine.dt;
  std::vector<int> slot(coarse.size(), -1);
  for (int c : fine.cells) slot[map[c]] = 0;
  for (int i = 0; i < coarse.size(); ++i)
    if (slot[i] == 0) {
      slot[i] = static_cast<int>(out.cells.size());
      out.cells.push_back(i);
    }
  const std::size_t nf = fine.cell_count();
  const std::size_t nc = out.cell_count();
  out.counts.assign(fine.frame_count() * nc, 0);
  for (std::size_t j = 0; j < fine.frame_count(); ++j)
    for (std::size_t k = 0; k < nf; ++k)
      out.counts[j * nc + slot[map[fine.cells[k]]]] += fine.counts[j * nf + k];
  return out;
}

/// Keep only the cells of `mask` that are present in the series.
inline CountFrameSeries apply_partial_mask(const CountFrameSeries& series, const PartialMask& mask) {
  if (mask.cell_count() != series.partition.size())
    throw DomainError("mask size does not match partition");
  CountFrameSeries out;
  out.partition = series.partition;
  out.dt = series.dt;
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < series.cell_count(); ++k)
    if (mask.contains(series.cells[k])) {
      keep.push_back(k);
      out.cells.push_back(series.cells[k]);
    }
  const std::size_t nc = series.cell_count();
  out.counts.reserve(series.frame_count() * keep.size());
  for (std::size_t j = 0; j < series.frame_count(); ++j)
    for (std::size_t k : keep) out.counts.push_back(series.counts[j * nc + k]);
  return out;
}

inline void write_events_csv(std::ostream& os, const MarkedEventList& events) {
  os << "time,x,y\n";
  char buf[96];
  for (const MarkedEvent& e : events.events) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", e.time, e.mark.x, e.mark.y);
    os << buf;
  }
}

}  // namespace mppf
