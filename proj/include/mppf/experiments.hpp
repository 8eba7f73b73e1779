#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mppf/bounds.hpp"
#include "mppf/enkf.hpp"
#include "mppf/error.hpp"
#include "mppf/filter.hpp"
#include "mppf/grid.hpp"
#include "mppf/io/config.hpp"
#include "mppf/io/frame_file.hpp"
#include "mppf/metrics.hpp"
#include "mppf/observation.hpp"
#include "mppf/oracle.hpp"
#include "mppf/parallel.hpp"
#include "mppf/rng.hpp"
#include "mppf/signal.hpp"

namespace mppf {

inline std::uint64_t sub_seed(std::uint64_t seed, StreamTag tag, std::uint64_t k) {
  return derive_stream(seed, tag, k)();
}

/// Hidden path and its counts. states[j] is the signal after step j + 1 and
/// generated frame j.
struct TruthRun {
  std::vector<FieldState> states;
  CountFrameSeries counts;  // finest level
};

inline TruthRun simulate_truth(const SignalModel& model, const IntensitySpec& spec, long steps, std::uint64_t seed) {
  const GridDomain& grid = model.grid();
  Stream init = derive_stream(seed, StreamTag::kInit);
  Stream sig = derive_stream(seed, StreamTag::kSignal);
  Stream obs = derive_stream(seed, StreamTag::kObservation);
  TruthRun run;
  run.counts = CountFrameSeries::empty(finest_level(grid), model.dt());
  FieldState s = model.initial_state(init);
  std::vector<double> rates(grid.cell_count());
  for (long j = 0; j < steps; ++j) {
    model.step(s, sig);
    check_finite(s, j + 1);
    eval_intensity(spec, s, grid.cell_area(), s.t, rates);
    run.counts.push_frame(sample_counts(rates, model.dt(), obs));
    run.states.push_back(s);
  }
  return run;
}

/// Cells observed at fraction f: the first ceil(f n) entries of one seeded
/// permutation, so masks for decreasing fractions are nested.
inline std::vector<PartialMask> nested_masks(int cell_count, const std::vector<double>& fractions, std::uint64_t seed) {
  std::vector<int> perm(cell_count);
  std::iota(perm.begin(), perm.end(), 0);
  Stream rng = derive_stream(seed, StreamTag::kMask);
  for (int i = cell_count - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform01() * (i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<PartialMask> out;
  for (double f : fractions) {
    const int k = std::max(1, static_cast<int>(std::ceil(f * cell_count - 1e-9)));
    out.emplace_back(std::vector<int>(perm.begin(), perm.begin() + k), cell_count);
  }
  return out;
}

inline void check_series_finite(const std::vector<double>& x, const std::string& what) {
  for (std::size_t j = 0; j < x.size(); ++j)
    if (!std::isfinite(x[j])) throw NumericalError("non-finite " + what, static_cast<long>(j), -1);
}

/// Per-step RMSE of a particle filter on a (possibly coarsened or masked) series.
inline std::vector<double> pf_mse(const SignalModel& model, const IntensitySpec& spec, const TruthRun& truth,
                                  const CountFrameSeries& series, std::size_t particles, std::uint64_t seed,
                                  const PfOptions& opt, double reference_scale,
                                  std::vector<FieldState>* snapshots = nullptr, long stride = 0) {
  const auto obs = ObservationOperator::for_series(spec, model.grid(), series, reference_scale);
  std::vector<double> mse(series.frame_count());
  run_particle_filter(model, obs, series, particles, seed, opt, [&](std::size_t j, const FieldState& est) {
    mse[j] = rmse(est, truth.states[j]);
    if (snapshots && stride > 0 && (j + 1) % stride == 0) snapshots->push_back(est);
  });
  return mse;
}

inline std::vector<double> enkf_mse(const SignalModel& model, const IntensitySpec& spec, const TruthRun& truth,
                                    const CountFrameSeries& series, EnkfConfig cfg, std::uint64_t seed) {
  const auto obs = ObservationOperator::for_series(spec, model.grid(), series);
  cfg.obs_variance = estimate_obs_variance(series);
  std::vector<double> mse(series.frame_count());
  run_enkf(model, obs, series, cfg, seed, [&](std::size_t j, const FieldState& est) { mse[j] = rmse(est, truth.states[j]); });
  return mse;
}

inline PfOptions pf_options(const ExperimentConfig& c) { return {c.filter.ess_threshold, 1}; }

/// mse[seed][level][step]; `levels` are observation cells per side, or mask fractions.
struct MseTable {
  std::vector<double> levels;
  std::vector<std::vector<std::vector<double>>> mse;
  std::vector<std::vector<FieldState>> snapshots;  // seed 0, per level
  std::vector<CountFrameSeries> observations;      // seed 0, finest level

  double final_quarter(std::size_t seed, std::size_t level) const { return final_quarter_mean(mse[seed][level]); }
};

/// PF error per observation resolution over seeded truths. Legs (seed, level)
/// run in parallel; each leg is a pure function of (config, seed index, level).
inline MseTable run_resolution_experiment(const ExperimentConfig& c) {
  const SignalModel model = make_signal_model(c);
  const std::size_t ns = c.experiment.seeds;
  const std::size_t nl = c.experiment.resolutions.size();
  std::vector<TruthRun> truth(ns);
  parallel_for(ns, c.experiment.workers, [&](std::size_t s) {
    truth[s] = simulate_truth(model, c.intensity, c.signal.steps, sub_seed(c.experiment.seed, StreamTag::kInstance, s));
  });
  MseTable t;
  for (int r : c.experiment.resolutions) t.levels.push_back(r);
  t.mse.assign(ns, std::vector<std::vector<double>>(nl));
  t.snapshots.assign(nl, {});
  parallel_for(ns * nl, c.experiment.workers, [&](std::size_t leg) {
    const std::size_t s = leg / nl, l = leg % nl;
    const PartitionLevel level(c.experiment.resolutions[l], c.grid.physical_side);
    const CountFrameSeries series = downscale_counts(truth[s].counts, level);
    // Same filter seed for every resolution: differences are paired.
    const std::uint64_t fseed = sub_seed(c.experiment.seed, StreamTag::kParticle, s);
    t.mse[s][l] = pf_mse(model, c.intensity, truth[s], series, c.filter.particles, fseed, pf_options(c),
                         c.filter.reference_scale, s == 0 ? &t.snapshots[l] : nullptr, c.experiment.snapshot_stride);
    check_series_finite(t.mse[s][l], "mse");
  });
  if (ns > 0) t.observations.push_back(truth[0].counts);
  return t;
}

/// PF versus EnKF per intensity scale: mse[scale][seed][filter][step], filter 0 = PF, 1 = EnKF.
struct WrongNoiseTable {
  std::vector<double> scales;
  std::vector<std::vector<std::vector<std::vector<double>>>> mse;

  double final_quarter(std::size_t c, std::size_t s, std::size_t f) const { return final_quarter_mean(mse[c][s][f]); }
};

inline WrongNoiseTable run_wrong_noise_experiment(const ExperimentConfig& c) {
  const SignalModel model = make_signal_model(c);
  const std::size_t ns = c.experiment.seeds;
  const std::size_t nc = c.experiment.intensity_scales.size();
  WrongNoiseTable t;
  t.scales = c.experiment.intensity_scales;
  t.mse.assign(nc, std::vector<std::vector<std::vector<double>>>(ns, std::vector<std::vector<double>>(2)));
  const PartitionLevel level(c.filter.resolution, c.grid.physical_side);
  parallel_for(nc * ns, c.experiment.workers, [&](std::size_t leg) {
    const std::size_t ci = leg / ns, s = leg % ns;
    IntensitySpec spec = c.intensity;
    spec.scale = c.experiment.intensity_scales[ci];
    const TruthRun truth = simulate_truth(model, spec, c.signal.steps, sub_seed(c.experiment.seed, StreamTag::kInstance, s));
    const CountFrameSeries series = downscale_counts(truth.counts, level);
    const std::uint64_t fseed = sub_seed(c.experiment.seed, StreamTag::kParticle, s);
    t.mse[ci][s][0] = pf_mse(model, spec, truth, series, c.filter.particles, fseed, pf_options(c), c.filter.reference_scale);
    EnkfConfig ec;
    ec.members = c.filter.enkf_members;
    ec.inflation = c.filter.enkf_inflation;
    ec.variance_floor = c.filter.variance_floor;
    t.mse[ci][s][1] = enkf_mse(model, spec, truth, series, ec, sub_seed(c.experiment.seed, StreamTag::kEnkf, s));
    check_series_finite(t.mse[ci][s][0], "pf mse");
    check_series_finite(t.mse[ci][s][1], "enkf mse");
  });
  return t;
}

/// PF error per observed-cell fraction with nested random masks at the filter resolution.
inline MseTable run_partial_experiment(const ExperimentConfig& c) {
  const SignalModel model = make_signal_model(c);
  const std::size_t ns = c.experiment.seeds;
  const std::size_t nl = c.experiment.mask_fractions.size();
  const PartitionLevel level(c.filter.resolution, c.grid.physical_side);
  std::vector<TruthRun> truth(ns);
  parallel_for(ns, c.experiment.workers, [&](std::size_t s) {
    truth[s] = simulate_truth(model, c.intensity, c.signal.steps, sub_seed(c.experiment.seed, StreamTag::kInstance, s));
  });
  MseTable t;
  t.levels = c.experiment.mask_fractions;
  t.mse.assign(ns, std::vector<std::vector<double>>(nl));
  parallel_for(ns * nl, c.experiment.workers, [&](std::size_t leg) {
    const std::size_t s = leg / nl, l = leg % nl;
    const auto masks = nested_masks(level.size(), c.experiment.mask_fractions,
                                    sub_seed(c.experiment.seed, StreamTag::kMask, s));
    const CountFrameSeries series = apply_partial_mask(downscale_counts(truth[s].counts, level), masks[l]);
    const std::uint64_t fseed = sub_seed(c.experiment.seed, StreamTag::kParticle, s);
    t.mse[s][l] = pf_mse(model, c.intensity, truth[s], series, c.filter.particles, fseed, pf_options(c),
                         c.filter.reference_scale);
    check_series_finite(t.mse[s][l], "mse");
  });
  return t;
}

struct BoundsInstance {
  OracleScenario scenario;
  std::vector<std::vector<int>> masks;
  BoundReport report;
};

/// Random affine-intensity oracle instances checked over the configured ladder.
inline std::vector<BoundsInstance> run_bounds_experiment(const ExperimentConfig& c) {
  std::vector<BoundsInstance> out(c.experiment.instances);
  parallel_for(out.size(), c.experiment.workers, [&](std::size_t i) {
    Stream rng = derive_stream(c.experiment.seed, StreamTag::kInstance, i);
    BoundsInstance& b = out[i];
    b.scenario = random_scenario(rng, 3, 40, 6);
    for (int cells : c.experiment.ladder) {
      std::vector<int> m;
      for (int k = 0; k < cells; ++k)
        if (rng.uniform01() < 0.5) m.push_back(k);
      if (m.empty()) m.push_back(static_cast<int>(rng.uniform01() * cells));
      b.masks.push_back(std::move(m));
    }
    b.report = verify_bound(b.scenario.model, b.scenario.dt, b.scenario.steps, b.scenario.events,
                            c.experiment.ladder, b.masks);
  });
  return out;
}

/// Frames of iid Poisson(rate) counts; with overdispersion the rate per sample
/// is Gamma(rate, 1) distributed, giving variance 2 * rate.
inline std::vector<std::uint32_t> synthetic_photon_frames(double rate, std::size_t frames, std::size_t pixels,
                                                          Stream& rng, bool overdispersed = false) {
  std::vector<std::uint32_t> out(frames * pixels);
  std::gamma_distribution<double> gamma(rate, 1.0);
  for (auto& v : out) {
    const double m = overdispersed ? gamma(rng) : rate;
    v = m > 0.0 ? static_cast<std::uint32_t>(std::poisson_distribution<long>(m)(rng)) : 0;
  }
  return out;
}

/// fits[rate][dataset]
inline std::vector<std::vector<PoissonFit>> run_photon_experiment(const ExperimentConfig& c) {
  const auto& rates = c.experiment.photon_rates;
  const std::size_t nd = c.experiment.photon_datasets;
  const std::size_t pixels = static_cast<std::size_t>(c.experiment.photon_side) * c.experiment.photon_side;
  std::vector<std::vector<PoissonFit>> fits(rates.size(), std::vector<PoissonFit>(nd));
  parallel_for(rates.size() * nd, c.experiment.workers, [&](std::size_t leg) {
    const std::size_t r = leg / nd, d = leg % nd;
    Stream rng = derive_stream(c.experiment.seed, StreamTag::kObservation, r, d);
    const auto frames = synthetic_photon_frames(rates[r], c.experiment.photon_frames, pixels, rng);
    fits[r][d] = poisson_fit_report(frames, pixels);
  });
  return fits;
}

// ---- output ----

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

inline void write_resolved_config(const std::filesystem::path& dir, const ExperimentConfig& c) {
  std::filesystem::create_directories(dir);
  auto os = open_out(dir / "config.resolved.ini");
  write_config(os, c);
}

/// step,<column>,mse per seed, plus summary.csv with final-quarter means.
inline void write_mse_table(const std::filesystem::path& dir, const MseTable& t, const std::string& column,
                            double dt) {
  for (std::size_t s = 0; s < t.mse.size(); ++s) {
    auto os = open_out(dir / ("mse_seed" + std::to_string(s) + ".csv"));
    os << "step," << column << ",mse\n";
    for (std::size_t l = 0; l < t.levels.size(); ++l)
      for (std::size_t j = 0; j < t.mse[s][l].size(); ++j)
        os << j + 1 << "," << fmt(t.levels[l]) << "," << fmt(t.mse[s][l][j]) << "\n";
  }
  auto os = open_out(dir / "summary.csv");
  os << "seed," << column << ",final_quarter_mse\n";
  for (std::size_t s = 0; s < t.mse.size(); ++s)
    for (std::size_t l = 0; l < t.levels.size(); ++l)
      os << s << "," << fmt(t.levels[l]) << "," << fmt(t.final_quarter(s, l)) << "\n";
  for (std::size_t l = 0; l < t.snapshots.size(); ++l)
    if (!t.snapshots[l].empty())
      write_frames((dir / ("estimates_" + column + "_" + fmt(t.levels[l]) + ".mppe")).string(),
                   to_estimate_file(t.snapshots[l], dt));
  if (!t.observations.empty()) write_frames((dir / "observations_seed0.mppf").string(), to_frame_file(t.observations[0]));
}

inline void write_wrong_noise_table(const std::filesystem::path& dir, const WrongNoiseTable& t) {
  static const char* names[2] = {"pf", "enkf"};
  const std::size_t ns = t.mse.empty() ? 0 : t.mse[0].size();
  for (std::size_t s = 0; s < ns; ++s) {
    auto os = open_out(dir / ("mse_seed" + std::to_string(s) + ".csv"));
    os << "step,c,filter,mse\n";
    for (std::size_t c = 0; c < t.scales.size(); ++c)
      for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t j = 0; j < t.mse[c][s][f].size(); ++j)
          os << j + 1 << "," << fmt(t.scales[c]) << "," << names[f] << "," << fmt(t.mse[c][s][f][j]) << "\n";
  }
  auto os = open_out(dir / "summary.csv");
  os << "seed,c,pf,enkf\n";
  for (std::size_t c = 0; c < t.scales.size(); ++c)
    for (std::size_t s = 0; s < ns; ++s)
      os << s << "," << fmt(t.scales[c]) << "," << fmt(t.final_quarter(c, s, 0)) << "," << fmt(t.final_quarter(c, s, 1))
         << "\n";
}

inline void write_bounds_instances(const std::filesystem::path& dir, const std::vector<BoundsInstance>& inst) {
  const std::pair<const char*, std::vector<BoundRow> BoundReport::*> files[] = {
      {"bounds_rho.csv", &BoundReport::rho},
      {"bounds_eta.csv", &BoundReport::eta},
      {"bounds_rho_partial.csv", &BoundReport::rho_partial},
      {"bounds_eta_partial.csv", &BoundReport::eta_partial}};
  for (const auto& [name, member] : files) {
    auto os = open_out(dir / name);
    os << "instance,level,diam,tv_sup,bound,margin\n";
    for (std::size_t i = 0; i < inst.size(); ++i)
      for (const BoundRow& r : inst[i].report.*member)
        os << i << "," << r.cells << "," << fmt(r.diam) << "," << fmt(r.tv_sup) << "," << fmt(r.bound) << ","
           << fmt(r.margin) << "\n";
  }
}

inline void write_poisson_fits(std::ostream& os, const std::vector<PoissonFit>& fits) {
  os << "lambda_hat,chi2_p,lag1\n";
  for (const PoissonFit& f : fits) os << fmt(f.lambda_hat) << "," << fmt(f.chi2_p) << "," << fmt(f.lag1) << "\n";
}

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"white-noise-mse", "fhn-mse",      "wrong-noise",
                                                 "partial-obs",     "bounds-check", "photon-stats"};
  return names;
}

/// Run a named experiment and write its outputs (CSV, frame files, resolved config) into `dir`.
inline void run_experiment(const std::string& name, const ExperimentConfig& c, const std::filesystem::path& dir) {
  validate(c);
  if (std::find(experiment_names().begin(), experiment_names().end(), name) == experiment_names().end())
    throw ConfigError("unknown experiment: " + name);
  ExperimentConfig cc = c;
  if (name == "white-noise-mse") cc.signal.model = "white-noise";
  if (name == "fhn-mse") cc.signal.model = "fhn";
  write_resolved_config(dir, cc);
  if (name == "white-noise-mse" || name == "fhn-mse") {
    write_mse_table(dir, run_resolution_experiment(cc), "resolution", cc.signal.dt);
  } else if (name == "wrong-noise") {
    write_wrong_noise_table(dir, run_wrong_noise_experiment(c));
  } else if (name == "partial-obs") {
    write_mse_table(dir, run_partial_experiment(c), "fraction", c.signal.dt);
  } else if (name == "bounds-check") {
    const auto inst = run_bounds_experiment(c);
    write_bounds_instances(dir, inst);
    std::size_t v = 0;
    for (const auto& b : inst) v += b.report.violations();
    if (v > 0) throw Error("bound violations: " + std::to_string(v));
  } else if (name == "photon-stats") {
    const auto fits = run_photon_experiment(c);
    for (std::size_t r = 0; r < fits.size(); ++r) {
      auto os = open_out(dir / ("photon_" + fmt(c.experiment.photon_rates[r]) + ".csv"));
      write_poisson_fits(os, fits[r]);
    }
  }
}

}  // namespace mppf
