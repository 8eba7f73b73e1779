#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "mppf/experiments.hpp"

using namespace mppf;
namespace fs = std::filesystem;

namespace {

const char* kSmall =
    "[grid]\nwidth = 8\nheight = 8\n"
    "[signal]\nsteps = 24\namplitude = 0.01\n"
    "[filter]\nparticles = 8\nresolution = 4\nenkf_members = 8\n"
    "[experiment]\nseeds = 2\nresolutions = 8,4,1\nmask_fractions = 1,0.5,0.25\nintensity_scales = 100,2000\n"
    "instances = 6\nladder = 1,2,4\nphoton_rates = 0.5,3\nphoton_datasets = 3\nphoton_frames = 20\n"
    "photon_side = 10\nsnapshot_stride = 8\n";

fs::path fresh_dir(const std::string& tag) {
  const fs::path d = fs::temp_directory_path() / ("mppf_test_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(d);
  return d;
}

std::map<std::string, std::string> slurp_dir(const fs::path& d) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(d)) {
    std::ifstream is(e.path(), std::ios::binary);
    out[e.path().filename().string()] = std::string(std::istreambuf_iterator<char>(is), {});
  }
  return out;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST(NestedMasks, SizesNestingAndDeterminism) {
  const std::vector<double> f = {1.0, 0.5, 0.25, 0.0625, 0.01};
  const auto a = nested_masks(64, f, 7);
  const auto b = nested_masks(64, f, 7);
  const auto c = nested_masks(64, f, 8);
  ASSERT_EQ(a.size(), f.size());
  const std::vector<std::size_t> sizes = {64, 32, 16, 4, 1};
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_EQ(a[i].observed().size(), sizes[i]);
    EXPECT_EQ(a[i].observed(), b[i].observed());
    const std::set<int> uniq(a[i].observed().begin(), a[i].observed().end());
    EXPECT_EQ(uniq.size(), sizes[i]);
    if (i > 0) {
      for (int cell : a[i].observed()) EXPECT_TRUE(a[i - 1].contains(cell));
    }
  }
  EXPECT_NE(a[2].observed(), c[2].observed());
}

TEST(SimulateTruth, MatchesSignalPathAndCounts) {
  const ExperimentConfig c = parse_config_string(kSmall);
  const SignalModel m = make_signal_model(c);
  const TruthRun t = simulate_truth(m, c.intensity, 10, 99);
  const auto path = simulate_path(m, 10, 99);
  ASSERT_EQ(t.states.size(), 10u);
  ASSERT_EQ(t.counts.frame_count(), 10u);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(t.states[j], path[j + 1]);
  Stream obs = derive_stream(99, StreamTag::kObservation);
  for (std::size_t j = 0; j < 10; ++j) {
    const auto expected = sample_counts(eval_intensity(c.intensity, path[j + 1], m.grid(), path[j + 1].t), m.dt(), obs);
    const auto got = t.counts.frame(j);
    EXPECT_TRUE(std::equal(got.begin(), got.end(), expected.begin(), expected.end())) << "frame " << j;
  }
}

TEST(ResolutionExperiment, ShapesAndFiniteErrors) {
  const ExperimentConfig c = parse_config_string(kSmall);
  const MseTable t = run_resolution_experiment(c);
  ASSERT_EQ(t.mse.size(), 2u);
  ASSERT_EQ(t.levels, (std::vector<double>{8, 4, 1}));
  for (const auto& per_seed : t.mse) {
    ASSERT_EQ(per_seed.size(), 3u);
    for (const auto& series : per_seed) {
      ASSERT_EQ(series.size(), 24u);
      for (double e : series) {
        EXPECT_TRUE(std::isfinite(e));
        EXPECT_GE(e, 0.0);
      }
    }
  }
  EXPECT_EQ(t.snapshots[0].size(), 3u);  // steps 8, 16, 24
  ASSERT_EQ(t.observations.size(), 1u);
}

TEST(WrongNoiseExperiment, ShapesAndFiniteErrors) {
  const ExperimentConfig c = parse_config_string(kSmall);
  const WrongNoiseTable t = run_wrong_noise_experiment(c);
  ASSERT_EQ(t.mse.size(), 2u);
  for (const auto& per_scale : t.mse)
    for (const auto& per_seed : per_scale)
      for (const auto& series : per_seed) {
        ASSERT_EQ(series.size(), 24u);
        for (double e : series) EXPECT_TRUE(std::isfinite(e));
      }
}

TEST(BoundsExperiment, NoViolations) {
  const ExperimentConfig c = parse_config_string(kSmall);
  for (const BoundsInstance& b : run_bounds_experiment(c)) {
    EXPECT_EQ(b.report.violations(), 0u);
    EXPECT_EQ(b.report.rho.size(), 3u);
    EXPECT_EQ(b.masks.size(), 3u);
  }
}

TEST(PhotonExperiment, PoissonDataFitsAndOverdispersedDataFails) {
  const ExperimentConfig c = parse_config_string(kSmall);
  const auto fits = run_photon_experiment(c);
  ASSERT_EQ(fits.size(), 2u);
  for (std::size_t r = 0; r < fits.size(); ++r)
    for (const PoissonFit& f : fits[r]) {
      EXPECT_NEAR(f.lambda_hat, c.experiment.photon_rates[r], 5.0 * std::sqrt(c.experiment.photon_rates[r] / 2000.0));
      EXPECT_FALSE(f.degenerate);
    }
  Stream rng(5);
  const auto over = synthetic_photon_frames(3.0, 100, 100, rng, true);
  EXPECT_LT(poisson_fit_report(over, 100).chi2_p, 0.01);
}

TEST(RunExperiment, EveryExperimentWritesExpectedFiles) {
  const ExperimentConfig c = parse_config_string(kSmall);
  const std::map<std::string, std::vector<std::pair<std::string, std::string>>> expect = {
      {"white-noise-mse", {{"mse_seed0.csv", "step,resolution,mse"}, {"summary.csv", "seed,resolution,final_quarter_mse"}}},
      {"wrong-noise", {{"mse_seed1.csv", "step,c,filter,mse"}, {"summary.csv", "seed,c,pf,enkf"}}},
      {"partial-obs", {{"mse_seed0.csv", "step,fraction,mse"}}},
      {"bounds-check", {{"bounds_rho.csv", "instance,level,diam,tv_sup,bound,margin"},
                        {"bounds_eta_partial.csv", "instance,level,diam,tv_sup,bound,margin"}}},
      {"photon-stats", {{"photon_0.5.csv", "lambda_hat,chi2_p,lag1"}, {"photon_3.csv", "lambda_hat,chi2_p,lag1"}}},
  };
  for (const auto& [name, files] : expect) {
    const fs::path d = fresh_dir(name);
    run_experiment(name, c, d);
    const auto out = slurp_dir(d);
    ASSERT_TRUE(out.count("config.resolved.ini")) << name;
    EXPECT_EQ(parse_config_string(out.at("config.resolved.ini")).experiment, c.experiment);
    for (const auto& [file, header] : files) {
      ASSERT_TRUE(out.count(file)) << name << " " << file;
      EXPECT_EQ(first_line(out.at(file)), header) << name << " " << file;
    }
    fs::remove_all(d);
  }
}

TEST(RunExperiment, ResolutionOutputsIncludeFrameFiles) {
  const ExperimentConfig c = parse_config_string(kSmall);
  const fs::path d = fresh_dir("frames");
  run_experiment("white-noise-mse", c, d);
  const auto obs = read_frames<std::uint32_t>((d / "observations_seed0.mppf").string());
  EXPECT_EQ(obs.width, 8);
  EXPECT_EQ(obs.frame_count, 24u);
  const auto est = read_frames<double>((d / "estimates_resolution_4.mppe").string());
  EXPECT_EQ(est.frame_count, 3u);
  fs::remove_all(d);
}

TEST(RunExperiment, FhnResolvedConfigNamesTheModel) {
  ExperimentConfig c = parse_config_string(kSmall);
  c.signal.dt = 0.1;
  c.signal.steps = 8;
  c.experiment.snapshot_stride = 0;
  const fs::path d = fresh_dir("fhn");
  run_experiment("fhn-mse", c, d);
  std::ifstream is(d / "config.resolved.ini");
  const ExperimentConfig r = parse_config(is);
  EXPECT_EQ(r.signal.model, "fhn");
  fs::remove_all(d);
}

TEST(RunExperiment, FixedSeedGivesByteIdenticalOutputsForAnyWorkerCount) {
  for (const std::string name : {"white-noise-mse", "wrong-noise", "partial-obs", "bounds-check", "photon-stats"}) {
    ExperimentConfig c = parse_config_string(kSmall);
    const fs::path a = fresh_dir(name + "_a"), b = fresh_dir(name + "_b"), w = fresh_dir(name + "_w");
    run_experiment(name, c, a);
    run_experiment(name, c, b);
    c.experiment.workers = 3;
    run_experiment(name, c, w);
    const auto fa = slurp_dir(a), fb = slurp_dir(b);
    auto fw = slurp_dir(w);
    EXPECT_EQ(fa, fb) << name;
    // The resolved config records the worker count; everything else must match.
    fw.erase("config.resolved.ini");
    auto fa_no_cfg = fa;
    fa_no_cfg.erase("config.resolved.ini");
    EXPECT_EQ(fa_no_cfg, fw) << name;
    for (const auto& p : {a, b, w}) fs::remove_all(p);
  }
}

TEST(RunExperiment, DifferentSeedChangesOutputs) {
  ExperimentConfig c = parse_config_string(kSmall);
  const fs::path a = fresh_dir("seed_a"), b = fresh_dir("seed_b");
  run_experiment("white-noise-mse", c, a);
  c.experiment.seed = 2;
  run_experiment("white-noise-mse", c, b);
  EXPECT_NE(slurp_dir(a).at("mse_seed0.csv"), slurp_dir(b).at("mse_seed0.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(RunExperiment, ErrorsAreReported) {
  ExperimentConfig c = parse_config_string(kSmall);
  EXPECT_THROW(run_experiment("no-such-experiment", c, fresh_dir("bad")), ConfigError);
  // An explicit FHN step beyond its stability limit is rejected before running.
  c.signal.dt = 1e3;
  EXPECT_THROW(run_experiment("fhn-mse", c, fresh_dir("unstable")), ConfigError);
  fs::remove_all(fresh_dir("bad"));
  fs::remove_all(fresh_dir("unstable"));
  EXPECT_THROW(check_series_finite({1.0, std::nan("")}, "mse"), NumericalError);
}
