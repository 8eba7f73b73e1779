#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mppf/enkf.hpp"
#include "support.hpp"

using namespace mppf;

namespace {
CountFrameSeries poisson_series(double rate, double dt, std::size_t frames, int n, std::uint64_t seed) {
  CountFrameSeries s = CountFrameSeries::empty(PartitionLevel(n, 1.0), dt);
  Stream rng(seed);
  const std::vector<double> rates(n * n, rate);
  for (std::size_t j = 0; j < frames; ++j) s.push_frame(sample_counts(rates, dt, rng));
  return s;
}
}  // namespace

TEST(EnkfAnalysis, InfiniteNoiseLeavesForecast) {
  Stream rng(1);
  std::normal_distribution<double> n;
  Eigen::MatrixXd X(3, 10);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = n(rng);
  const Eigen::MatrixXd before = X;
  const Eigen::MatrixXd HX = X.topRows(2) * 2.0;
  Eigen::VectorXd y(2), r(2);
  y << 5.0, -5.0;
  r << 1e30, 1e30;
  enkf_analysis(X, HX, y, r, 1.0, rng);
  EXPECT_LT((X - before).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EnkfAnalysis, IdenticalMembersAreNotUpdated) {
  Eigen::MatrixXd X(2, 2);
  X << 1.0, 1.0, 3.0, 3.0;
  const Eigen::MatrixXd before = X;
  Eigen::MatrixXd HX(1, 2);
  HX << 4.0, 4.0;
  Eigen::VectorXd y(1), r(1);
  y << 10.0;
  r << 1e-12;
  Stream rng(2);
  enkf_analysis(X, HX, y, r, 1.0, rng);
  EXPECT_EQ(X, before);
}

TEST(EnkfAnalysis, ScalarGaussianMatchesKalman) {
  // Prior N(m0, p0), h(x) = x, noise variance r; large ensemble.
  const double m0 = 1.0, p0 = 2.0, r0 = 0.5, yobs = 3.0;
  const double gain = p0 / (p0 + r0);
  const double post_mean = m0 + gain * (yobs - m0);
  const double post_var = (1.0 - gain) * p0;
  const Eigen::Index L = 100000;
  Stream rng(3);
  std::normal_distribution<double> n(m0, std::sqrt(p0));
  Eigen::MatrixXd X(1, L);
  for (Eigen::Index j = 0; j < L; ++j) X(0, j) = n(rng);
  Eigen::VectorXd y(1), r(1);
  y << yobs;
  r << r0;
  enkf_analysis(X, X, y, r, 1.0, rng);
  const double mean = X.mean();
  const double var = (X.array() - mean).square().sum() / (L - 1);
  EXPECT_NEAR(mean, post_mean, 5.0 * std::sqrt(post_var / L));
  EXPECT_NEAR(var, post_var, 0.02 * post_var);
}

class EnkfGainForms : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(EnkfGainForms, MatchesDirectGainFormula) {
  // Same perturbed observations through C_xy (C_yy + R)^{-1}.
  const auto [L, m] = GetParam();
  const int dim = 5;
  Stream rng(4);
  std::normal_distribution<double> n;
  Eigen::MatrixXd X(dim, L), HX(m, L);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < HX.size(); ++i) HX.data()[i] = n(rng) + 2.0;
  Eigen::VectorXd y(m), r(m);
  for (int i = 0; i < m; ++i) {
    y(i) = 1.0 + i;
    r(i) = 0.3 + 0.4 * i;
  }
  Eigen::MatrixXd Xw = X;
  Stream a(5), b(5);
  enkf_analysis(Xw, HX, y, r, 1.0, a);

  std::normal_distribution<double> nn;
  Eigen::MatrixXd D(m, L);
  for (int j = 0; j < L; ++j)
    for (int i = 0; i < m; ++i) D(i, j) = y(i) + std::sqrt(r(i)) * nn(b);
  const Eigen::MatrixXd A = X.colwise() - X.rowwise().mean();
  const Eigen::MatrixXd Ha = HX.colwise() - HX.rowwise().mean();
  const Eigen::MatrixXd cxy = A * Ha.transpose() / (L - 1);
  Eigen::MatrixXd cyy = Ha * Ha.transpose() / (L - 1);
  cyy.diagonal() += r;
  const Eigen::MatrixXd K = cxy * cyy.inverse();
  const Eigen::MatrixXd Xd = X + K * (D - HX);
  EXPECT_LT((Xw - Xd).cwiseAbs().maxCoeff(), 1e-10);
}

// Fewer observations than members, and more.
INSTANTIATE_TEST_SUITE_P(Shapes, EnkfGainForms, ::testing::Values(std::pair{8, 3}, std::pair{4, 9}));

TEST(ObsVariance, ConstantCountsGiveZeroVariance) {
  CountFrameSeries s = CountFrameSeries::empty(PartitionLevel(2, 1.0), 1.0);
  for (int j = 0; j < 5; ++j) s.push_frame(std::vector<std::uint32_t>{3, 3, 0, 7});
  for (double v : estimate_obs_variance(s)) EXPECT_EQ(v, 0.0);
  CountFrameSeries one = CountFrameSeries::empty(PartitionLevel(1, 1.0), 1.0);
  one.push_frame(std::vector<std::uint32_t>{1});
  EXPECT_THROW(estimate_obs_variance(one), DomainError);
}

TEST(ObsVariance, PoissonVarianceWithinCltBand) {
  const double dt = 0.5;
  const auto s = poisson_series(2.0, dt, 20000, 1, 6);
  const double v = estimate_obs_variance(s)[0] * dt;
  // Var of the sample variance of Poisson(mu) is about (mu + 2 mu^2) / n.
  const double mu = 2.0 * dt;
  EXPECT_NEAR(v, mu, 3.0 * std::sqrt((mu + 2 * mu * mu) / 20000.0));
}

TEST(ObsVariance, DoublingDtDoublesPerFrameVariance) {
  const auto a = poisson_series(3.0, 0.5, 40000, 1, 7);
  const auto b = poisson_series(3.0, 1.0, 40000, 1, 8);
  const double va = estimate_obs_variance(a)[0] * a.dt;
  const double vb = estimate_obs_variance(b)[0] * b.dt;
  EXPECT_NEAR(vb / va, 2.0, 0.08);
}

TEST(RunEnkf, FloorsVarianceAndTracksSignal) {
  WhiteNoiseModel w;
  w.noise.amplitude = 0.02;
  const SignalModel m(w, GridDomain(8, 8));
  IntensitySpec spec;
  spec.scale = 100.0;
  const auto path = simulate_path(m, 60, 9);
  Stream rng = derive_stream(9, StreamTag::kObservation);
  CountFrameSeries fine = CountFrameSeries::empty(finest_level(m.grid()), m.dt());
  for (std::size_t j = 1; j < path.size(); ++j)
    fine.push_frame(sample_counts(eval_intensity(spec, path[j], m.grid(), path[j].t), m.dt(), rng));
  const auto obs = ObservationOperator::for_series(spec, m.grid(), fine);
  EnkfConfig cfg;
  cfg.members = 20;
  cfg.obs_variance = estimate_obs_variance(fine);
  const auto run = run_enkf(m, obs, fine, cfg, 10);
  ASSERT_EQ(run.estimates.size(), 60u);
  for (const auto& e : run.estimates)
    for (double u : e.u) ASSERT_TRUE(std::isfinite(u));
  // Prior spread is 1; with c = 100 the filter must do better than the prior mean.
  double prior = 0.0, post = 0.0;
  for (int c = 0; c < 64; ++c) {
    prior += (10.0 - path.back().u[c]) * (10.0 - path.back().u[c]);
    post += (run.estimates.back().u[c] - path.back().u[c]) * (run.estimates.back().u[c] - path.back().u[c]);
  }
  EXPECT_LT(post, prior);
  cfg.obs_variance.pop_back();
  EXPECT_THROW(run_enkf(m, obs, fine, cfg, 10), ConfigError);
}

TEST(RunEnkf, WorkerCountDoesNotChangeOutput) {
  const SignalModel m(FhnModel(FhnParams{}, GridDomain(8, 8)));
  IntensitySpec spec;
  spec.scale = 100.0;
  const auto path = simulate_path(m, 20, 11);
  Stream rng = derive_stream(11, StreamTag::kObservation);
  CountFrameSeries fine = CountFrameSeries::empty(finest_level(m.grid()), m.dt());
  for (std::size_t j = 1; j < path.size(); ++j)
    fine.push_frame(sample_counts(eval_intensity(spec, path[j], m.grid(), path[j].t), m.dt(), rng));
  const auto series = downscale_counts(fine, PartitionLevel(4, 1.0));
  const auto obs = ObservationOperator::for_series(spec, m.grid(), series);
  EnkfConfig cfg;
  cfg.members = 10;
  cfg.obs_variance = estimate_obs_variance(series);
  cfg.workers = 1;
  const auto a = run_enkf(m, obs, series, cfg, 12);
  cfg.workers = 3;
  const auto b = run_enkf(m, obs, series, cfg, 12);
  for (std::size_t j = 0; j < a.estimates.size(); ++j) EXPECT_EQ(a.estimates[j], b.estimates[j]);
}
