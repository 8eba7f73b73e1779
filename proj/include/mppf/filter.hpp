#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mppf/error.hpp"
#include "mppf/grid.hpp"
#include "mppf/intensity.hpp"
#include "mppf/observation.hpp"
#include "mppf/particle_filter.hpp"
#include "mppf/signal.hpp"

namespace mppf {

/// Maps a signal state to predicted per-cell rates on the observed cells of a
/// partition level, and scores count frames against a unit-rate reference.
class ObservationOperator {
 public:
  ObservationOperator(const IntensitySpec& spec, const GridDomain& grid, const PartitionLevel& level,
                      std::vector<int> observed_cells, double reference_scale = 1.0)
      : spec_(spec),
        grid_(grid),
        level_(level),
        map_(downscale_map(finest_level(grid), level)),
        cells_(std::move(observed_cells)),
        reference_(cells_.size(), reference_scale * level.cell_area()) {
    spec_.validate();
    if (!(reference_scale > 0.0)) throw ConfigError("reference_scale must be > 0");
    if (cells_.empty()) throw DomainError("observation needs at least one cell");
    for (int c : cells_)
      if (c < 0 || c >= level.size()) throw DomainError("observed cell outside partition");
  }

  /// Operator matching a (possibly masked) count series.
  static ObservationOperator for_series(const IntensitySpec& spec, const GridDomain& grid,
                                        const CountFrameSeries& series, double reference_scale = 1.0) {
    return ObservationOperator(spec, grid, series.partition, series.cells, reference_scale);
  }

  const IntensitySpec& spec() const { return spec_; }
  const GridDomain& grid() const { return grid_; }
  const PartitionLevel& level() const { return level_; }
  const std::vector<int>& cells() const { return cells_; }
  std::span<const double> reference() const { return reference_; }

  void predicted_rates(const FieldState& s, std::span<double> out) const {
    std::vector<double> fine(s.u.size());
    eval_intensity(spec_, s, grid_.cell_area(), s.t, fine);
    std::vector<double> coarse(level_.size());
    coarsen(fine, map_, coarse);
    for (std::size_t k = 0; k < cells_.size(); ++k) out[k] = coarse[cells_[k]];
  }

  std::vector<double> predicted_rates(const FieldState& s) const {
    std::vector<double> out(cells_.size());
    predicted_rates(s, out);
    return out;
  }

  double log_likelihood(const FieldState& s, std::span<const std::uint32_t> frame, double dt) const {
    const std::vector<double> rates = predicted_rates(s);
    return log_weight_increment<std::uint32_t>(rates, reference_, frame, dt);
  }

 private:
  IntensitySpec spec_;
  GridDomain grid_;
  PartitionLevel level_;
  std::vector<int> map_;
  std::vector<int> cells_;
  std::vector<double> reference_;
};

struct FilterRun {
  std::vector<FieldState> estimates;  // posterior mean after each frame
  std::vector<StepDiagnostics> diagnostics;
};

using EstimateSink = std::function<void(std::size_t frame, const FieldState& estimate)>;

/// Bootstrap particle filter over a count series. Particles are drawn from the
/// model's initial law. Estimates are handed to `sink` (if set) instead of stored.
inline FilterRun run_particle_filter(const SignalModel& model, const ObservationOperator& obs,
                                     const CountFrameSeries& series, std::size_t particles,
                                     std::uint64_t seed, const PfOptions& opt = {},
                                     const EstimateSink& sink = nullptr) {
  if (series.cells != obs.cells() || !(series.partition == obs.level()))
    throw DomainError("count series does not match observation operator");
  if (series.dt != model.dt()) throw ConfigError("observation dt differs from signal dt");
  auto ens = make_ensemble<FieldState>(particles, seed,
                                       [&](std::size_t, Stream& s) { return model.initial_state(s); });
  FilterRun run;
  const double dt = series.dt;
  for (std::size_t j = 0; j < series.frame_count(); ++j) {
    const auto frame = series.frame(j);
    run.diagnostics.push_back(pf_step(
        ens, [&](FieldState& p, Stream& s) { model.step(p, s); },
        [&](const FieldState& p) { return obs.log_likelihood(p, frame, dt); }, opt));
    ens.t = ens.particles.front().t;
    FieldState est = posterior_mean(ens);
    if (sink) {
      sink(j, est);
    } else {
      run.estimates.push_back(std::move(est));
    }
  }
  return run;
}

}  // namespace mppf
