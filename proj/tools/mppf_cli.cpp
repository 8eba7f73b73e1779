// mppf command line: simulation, observation, filtering, oracle and experiment runs.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mppf/bounds.hpp"
#include "mppf/enkf.hpp"
#include "mppf/experiments.hpp"
#include "mppf/filter.hpp"
#include "mppf/io/config.hpp"
#include "mppf/io/frame_file.hpp"
#include "mppf/io/scenario.hpp"
#include "mppf/metrics.hpp"
#include "mppf/oracle.hpp"

namespace fs = std::filesystem;
using namespace mppf;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  unsigned workers = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config (INI)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "base seed (overrides [experiment] seed)");
  app->add_option("--out", c.out, "output directory (overrides [experiment] output_dir)");
  app->add_option("--workers", c.workers, "worker threads (overrides [experiment] workers)");
}

ExperimentConfig load(const Common& c, const CLI::App* app) {
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    std::ifstream is(c.config);
    if (!is) throw ConfigError("cannot open " + c.config);
    cfg = parse_config(is);
  }
  if (app->count("--seed")) cfg.experiment.seed = c.seed;
  if (!c.out.empty()) cfg.experiment.output_dir = c.out;
  if (c.workers > 0) cfg.experiment.workers = c.workers;
  validate(cfg);
  write_resolved_config(cfg.experiment.output_dir, cfg);
  return cfg;
}

std::vector<FieldState> states_from_file(const EstimateFile& f) {
  std::vector<FieldState> out;
  const std::size_t n = f.frame_size();
  for (std::size_t j = 0; j < f.frame_count; ++j) {
    FieldState s;
    s.width = f.width;
    s.height = f.height;
    s.u.assign(f.payload.begin() + j * n, f.payload.begin() + (j + 1) * n);
    s.t = static_cast<double>(j + 1) * f.dt;
    out.push_back(std::move(s));
  }
  return out;
}

CountFrameSeries load_counts(const std::string& path, const ExperimentConfig& cfg, const std::string& mask_path) {
  CountFrameSeries s = from_frame_file(read_frames<std::uint32_t>(path), cfg.grid.physical_side);
  if (mask_path.empty()) return s;
  std::ifstream is(mask_path);
  if (!is) throw ConfigError("cannot open " + mask_path);
  std::vector<int> cells;
  for (int c; is >> c;) cells.push_back(c);
  return apply_partial_mask(s, PartialMask(cells, s.partition.size()));
}

void write_mse(const fs::path& path, const std::vector<FieldState>& est, const std::vector<FieldState>& truth,
               int resolution) {
  if (est.size() != truth.size()) throw DomainError("estimate and truth step counts differ");
  auto os = open_out(path);
  os << "step,resolution,mse\n";
  for (std::size_t j = 0; j < est.size(); ++j) os << j + 1 << "," << resolution << "," << fmt(rmse(est[j], truth[j])) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marked point process particle filtering toolkit"};
  app.require_subcommand(1);

  Common c_sim, c_obs, c_pf, c_enkf, c_oracle, c_bounds, c_photon, c_exp;

  auto* sim = app.add_subcommand("simulate", "simulate a signal path; writes signal.mppe (u after each step)");
  add_common(sim, c_sim);

  std::string obs_in;
  int obs_resolution = 0;
  bool obs_events = false;
  auto* obs = app.add_subcommand("observe", "sample photon counts for a signal; writes counts.mppf");
  add_common(obs, c_obs);
  obs->add_option("--signal", obs_in, "signal.mppe from simulate")->required()->check(CLI::ExistingFile);
  obs->add_option("--resolution", obs_resolution, "observation cells per side (default: filter resolution)");
  obs->add_flag("--events", obs_events, "also write exact-mark events to events.csv");

  std::string pf_counts, pf_truth, pf_mask;
  auto* pf = app.add_subcommand("filter", "particle filter over counts; writes estimates.mppe");
  add_common(pf, c_pf);
  pf->add_option("--counts", pf_counts, "counts.mppf")->required()->check(CLI::ExistingFile);
  pf->add_option("--truth", pf_truth, "signal.mppe; adds mse.csv")->check(CLI::ExistingFile);
  pf->add_option("--mask", pf_mask, "whitespace-separated observed cell indices")->check(CLI::ExistingFile);

  std::string en_counts, en_truth, en_mask;
  auto* en = app.add_subcommand("enkf", "ensemble Kalman filter over counts; writes estimates.mppe");
  add_common(en, c_enkf);
  en->add_option("--counts", en_counts, "counts.mppf")->required()->check(CLI::ExistingFile);
  en->add_option("--truth", en_truth, "signal.mppe; adds mse.csv")->check(CLI::ExistingFile);
  en->add_option("--mask", en_mask, "whitespace-separated observed cell indices")->check(CLI::ExistingFile);

  std::string or_scenario;
  auto* orc = app.add_subcommand("oracle", "exact finite-state filter; writes posterior.csv");
  add_common(orc, c_oracle);
  orc->add_option("--scenario", or_scenario, "scenario INI")->required()->check(CLI::ExistingFile);

  std::string bd_scenario;
  auto* bd = app.add_subcommand("bounds", "verify error bounds on a scenario over [experiment] ladder");
  add_common(bd, c_bounds);
  bd->add_option("--scenario", bd_scenario, "scenario INI")->required()->check(CLI::ExistingFile);

  std::string ph_in;
  std::vector<int> ph_region;
  auto* ph = app.add_subcommand("photon-stats", "Poisson fit report of a frame file, or of synthetic data");
  add_common(ph, c_photon);
  ph->add_option("--input", ph_in, "frame file (.mppf)")->check(CLI::ExistingFile);
  ph->add_option("--region", ph_region, "x0 y0 x1 y1 (half-open pixel box)")->expected(4);

  std::string exp_name;
  auto* ex = app.add_subcommand("experiment", "run a named experiment");
  add_common(ex, c_exp);
  ex->add_option("name", exp_name, "experiment name")->required()->check(CLI::IsMember(experiment_names()));

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      const auto cfg = load(c_sim, sim);
      auto path = simulate_path(make_signal_model(cfg), cfg.signal.steps, cfg.experiment.seed);
      path.erase(path.begin());
      write_frames((fs::path(cfg.experiment.output_dir) / "signal.mppe").string(), to_estimate_file(path, cfg.signal.dt));
    } else if (obs->parsed()) {
      const auto cfg = load(c_obs, obs);
      const GridDomain grid = make_grid(cfg);
      const auto path = states_from_file(read_frames<double>(obs_in));
      if (path.empty() || path.front().width != grid.width_cells()) throw DomainError("signal does not match [grid]");
      const double dt = read_frames<double>(obs_in).dt;
      Stream rng = derive_stream(cfg.experiment.seed, StreamTag::kObservation);
      CountFrameSeries fine = CountFrameSeries::empty(finest_level(grid), dt);
      std::vector<double> rates(grid.cell_count());
      for (const FieldState& s : path) {
        eval_intensity(cfg.intensity, s, grid.cell_area(), s.t, rates);
        fine.push_frame(sample_counts(rates, dt, rng));
      }
      const int res = obs_resolution > 0 ? obs_resolution : cfg.filter.resolution;
      const auto series = downscale_counts(fine, PartitionLevel(res, cfg.grid.physical_side));
      const fs::path dir = cfg.experiment.output_dir;
      write_frames((dir / "counts.mppf").string(), to_frame_file(series));
      if (obs_events) {
        Stream erng = derive_stream(cfg.experiment.seed, StreamTag::kObservation, 1);
        auto os = open_out(dir / "events.csv");
        write_events_csv(os, sample_marked_events(cfg.intensity, path, grid, dt, erng));
      }
    } else if (pf->parsed() || en->parsed()) {
      const bool is_pf = pf->parsed();
      const Common& cc = is_pf ? c_pf : c_enkf;
      const auto cfg = load(cc, is_pf ? pf : en);
      const SignalModel model = make_signal_model(cfg);
      const auto series = load_counts(is_pf ? pf_counts : en_counts, cfg, is_pf ? pf_mask : en_mask);
      std::vector<FieldState> est;
      if (is_pf) {
        const auto op = ObservationOperator::for_series(cfg.intensity, model.grid(), series, cfg.filter.reference_scale);
        est = run_particle_filter(model, op, series, cfg.filter.particles,
                                  sub_seed(cfg.experiment.seed, StreamTag::kParticle, 0),
                                  {cfg.filter.ess_threshold, cfg.experiment.workers})
                  .estimates;
      } else {
        const auto op = ObservationOperator::for_series(cfg.intensity, model.grid(), series);
        EnkfConfig ec;
        ec.members = cfg.filter.enkf_members;
        ec.inflation = cfg.filter.enkf_inflation;
        ec.variance_floor = cfg.filter.variance_floor;
        ec.workers = cfg.experiment.workers;
        ec.obs_variance = estimate_obs_variance(series);
        est = run_enkf(model, op, series, ec, sub_seed(cfg.experiment.seed, StreamTag::kEnkf, 0)).estimates;
      }
      const fs::path dir = cfg.experiment.output_dir;
      write_frames((dir / "estimates.mppe").string(), to_estimate_file(est, series.dt));
      const std::string& truth = is_pf ? pf_truth : en_truth;
      if (!truth.empty())
        write_mse(dir / "mse.csv", est, states_from_file(read_frames<double>(truth)),
                  series.partition.cells_per_side());
    } else if (orc->parsed()) {
      const auto cfg = load(c_oracle, orc);
      std::ifstream is(or_scenario);
      const ScenarioFile sf = parse_scenario(is);
      const auto& s = sf.scenario;
      const auto post = run_exact_filter(s.model, sf.channel(), s.dt, s.steps, s.events);
      auto os = open_out(fs::path(cfg.experiment.output_dir) / "posterior.csv");
      os << "step,t,state,rho,eta\n";
      for (std::size_t j = 0; j < post.size(); ++j)
        for (std::size_t k = 0; k < post[j].rho.size(); ++k)
          os << j << "," << fmt(post[j].t) << "," << k << "," << fmt(post[j].rho[k]) << "," << fmt(post[j].eta[k])
             << "\n";
    } else if (bd->parsed()) {
      const auto cfg = load(c_bounds, bd);
      std::ifstream is(bd_scenario);
      const ScenarioFile sf = parse_scenario(is);
      const auto& s = sf.scenario;
      const BoundReport rep = verify_bound(s.model, s.dt, s.steps, s.events, cfg.experiment.ladder);
      const fs::path dir = cfg.experiment.output_dir;
      auto rho = open_out(dir / "bounds_rho.csv");
      write_bound_csv(rho, rep.rho);
      auto eta = open_out(dir / "bounds_eta.csv");
      write_bound_csv(eta, rep.eta);
      if (rep.violations() > 0) {
        std::cerr << "bound violations: " << rep.violations() << "\n";
        return 2;
      }
    } else if (ph->parsed()) {
      const auto cfg = load(c_photon, ph);
      const fs::path dir = cfg.experiment.output_dir;
      if (ph_in.empty()) {
        const auto fits = run_photon_experiment(cfg);
        for (std::size_t r = 0; r < fits.size(); ++r) {
          auto os = open_out(dir / ("photon_" + fmt(cfg.experiment.photon_rates[r]) + ".csv"));
          write_poisson_fits(os, fits[r]);
        }
      } else {
        const FrameFile f = read_frames<std::uint32_t>(ph_in);
        int x0 = 0, y0 = 0, x1 = f.width, y1 = f.height;
        if (!ph_region.empty()) {
          x0 = ph_region[0], y0 = ph_region[1], x1 = ph_region[2], y1 = ph_region[3];
          if (x0 < 0 || y0 < 0 || x1 > f.width || y1 > f.height || x0 >= x1 || y0 >= y1)
            throw DomainError("region outside frame");
        }
        std::vector<std::uint32_t> sub;
        for (std::size_t j = 0; j < f.frame_count; ++j)
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) sub.push_back(f.payload[j * f.frame_size() + y * f.width + x]);
        auto os = open_out(dir / "photon.csv");
        write_poisson_fits(os, {poisson_fit_report(sub, static_cast<std::size_t>(x1 - x0) * (y1 - y0))});
      }
    } else if (ex->parsed()) {
      const auto cfg = load(c_exp, ex);
      run_experiment(exp_name, cfg, cfg.experiment.output_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
