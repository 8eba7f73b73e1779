#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "mppf/bounds.hpp"
#include "mppf/rng.hpp"
#include "scenarios.hpp"

using namespace mppf;

namespace {

BoundInputs unit_inputs() {
  BoundInputs in;
  in.lambda_minus = 1.0;
  in.lambda_plus = 1.0;
  in.horizon = 1.0;
  in.mark_measure = 1.0;
  return in;
}

BoundInputs random_inputs(Stream& rng) {
  BoundInputs in;
  in.lambda_minus = 0.2 + 2.0 * rng.uniform01();
  in.lambda_plus = in.lambda_minus * (1.0 + 2.0 * rng.uniform01());
  in.lipschitz = 3.0 * rng.uniform01();
  in.horizon = 2.0 * rng.uniform01();
  in.mark_measure = 0.5 + rng.uniform01();
  in.ground_count = static_cast<long>(rng.uniform01() * 6.0);
  return in;
}

}  // namespace

TEST(ThetaEnvelopes, UnitIntensityCollapsesToOne) {
  for (double t : {0.0, 0.5, 3.0})
    for (long n : {0L, 1L, 7L}) {
      const Envelopes e = theta_envelopes(1.0, 1.0, t, 1.0, n);
      EXPECT_DOUBLE_EQ(e.lower, 1.0);
      EXPECT_DOUBLE_EQ(e.upper, 1.0);
    }
}

TEST(ThetaEnvelopes, HandCaseLambdaPlusPowerN) {
  EXPECT_DOUBLE_EQ(theta_envelopes(1.0, 2.0, 1.0, 1.0, 2).upper, 4.0);
  BoundInputs in = unit_inputs();
  in.lambda_plus = 2.0;
  EXPECT_DOUBLE_EQ(theta_envelopes(in, 1.0, 2).upper, 4.0);
}

TEST(ThetaEnvelopes, OrderedAndMonotoneInTime) {
  Stream rng(1);
  for (int rep = 0; rep < 500; ++rep) {
    const BoundInputs in = random_inputs(rng);
    Envelopes prev = theta_envelopes(in, 0.0, in.ground_count);
    for (int i = 1; i <= 50; ++i) {
      const Envelopes e = theta_envelopes(in, 0.1 * i, in.ground_count);
      ASSERT_LE(e.lower, e.upper);
      ASSERT_GE(e.upper, prev.upper * (1.0 - 1e-15));
      ASSERT_LE(e.lower, prev.lower * (1.0 + 1e-15));
      prev = e;
    }
  }
}

// Simulate (X, Y) on the two-state model in continuous time and track the
// likelihood ratio Z(t) against the unit-rate reference at every jump.
TEST(ThetaEnvelopes, SimulatedLikelihoodRatioStaysInside) {
  const auto s = test::two_state_scenario();
  const FiniteStateModel& m = s.model;
  const double lm = m.lambda_minus(), lp = m.lambda_plus();
  const double horizon = 3.0;
  Stream rng(2);
  auto expo = [&](double rate) { return -std::log1p(-rng.uniform01()) / rate; };
  int checked = 0;
  for (int rep = 0; rep < 2000; ++rep) {
    int x = rng.uniform01() < m.initial[0] ? 0 : 1;
    double t = 0.0, log_z = 0.0;
    long n = 0;
    auto check = [&](double at) {
      const Envelopes e = theta_envelopes(lm, lp, at, 1.0, n);
      ASSERT_GE(log_z, std::log(e.lower) - 1e-12);
      ASSERT_LE(log_z, std::log(e.upper) + 1e-12);
      ++checked;
    };
    double next_switch = expo(-m.generator[x][x]);
    double next_candidate = expo(lp);
    while (true) {
      const double tn = std::min({next_switch, next_candidate, horizon});
      log_z -= (tn - t) * (m.intensity[x].integral(0.0, 1.0) - 1.0);
      t = tn;
      check(t);
      if (t >= horizon) break;
      if (next_switch <= next_candidate) {
        x = 1 - x;
        next_switch = t + expo(-m.generator[x][x]);
      } else {
        const double mark = rng.uniform01();
        if (rng.uniform01() * lp < m.intensity[x].at(mark)) {
          ++n;
          log_z += std::log(m.intensity[x].at(mark));
          check(t);
        }
        next_candidate = t + expo(lp);
      }
    }
  }
  EXPECT_GT(checked, 10000);
}

TEST(KappaRho, HandValues) {
  BoundInputs in = unit_inputs();
  in.ground_count = 2;
  EXPECT_EQ(kappa_rho(in), 0.0);
  in.lipschitz = 1.0;
  EXPECT_DOUBLE_EQ(kappa_rho(in), 1.5);
  Stream rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    BoundInputs r = random_inputs(rng);
    r.lipschitz = 0.0;
    EXPECT_EQ(kappa_rho(r), 0.0);
  }
}

TEST(KappaRho, NondecreasingInLipschitzAndCount) {
  Stream rng(4);
  for (int rep = 0; rep < 300; ++rep) {
    BoundInputs in = random_inputs(rng);
    const double base = kappa_rho(in);
    BoundInputs l = in;
    l.lipschitz += 0.1;
    EXPECT_GE(kappa_rho(l), base);
    BoundInputs n = in;
    n.ground_count += 1;
    EXPECT_GE(kappa_rho(n), base);
  }
}

TEST(KappaEta, HandValuesAndUnitCollapse) {
  BoundInputs in = unit_inputs();
  in.ground_count = 3;
  EXPECT_EQ(kappa_eta(in), 0.0);
  for (double l : {0.5, 1.0, 2.5}) {
    in.lipschitz = l;
    EXPECT_NEAR(kappa_eta(in), std::pow(1.0 + l, 3.0) - 1.0, 1e-12);
  }
}

TEST(KappaEta, AtLeastTwiceKappaRho) {
  Stream rng(5);
  for (int rep = 0; rep < 1000; ++rep) {
    const BoundInputs in = random_inputs(rng);
    ASSERT_LE(theta_envelopes(in, in.horizon, in.ground_count).lower, 1.0);
    EXPECT_GE(kappa_eta(in), 2.0 * kappa_rho(in) * (1.0 - 1e-14)) << "sample " << rep;
  }
}

TEST(Epsilon, FullObservationAndUnitIntensityGiveZero) {
  BoundInputs in = unit_inputs();
  in.ground_count = 4;
  in.observed_count = 4;
  EXPECT_EQ(epsilon_rho(in), 0.0);
  EXPECT_EQ(epsilon_eta(in), 0.0);
  in.unobserved_count = 1;
  in.observed_count = 3;
  in.unobserved_measure = 0.25;
  in.observed_measure = 0.75;
  EXPECT_EQ(epsilon_rho(in), 0.0);
  EXPECT_EQ(epsilon_eta(in), 0.0);
}

TEST(Epsilon, StrictlyIncreasingInUnobservedCount) {
  Stream rng(6);
  for (int rep = 0; rep < 300; ++rep) {
    BoundInputs in = random_inputs(rng);
    in.lambda_plus = std::max(in.lambda_plus, 1.1);
    in.unobserved_measure = 0.3 * rng.uniform01();
    in.observed_measure = in.mark_measure - in.unobserved_measure;
    double prev = epsilon_rho(in), prev_eta = epsilon_eta(in);
    for (int k = 0; k < 5; ++k) {
      ++in.unobserved_count;
      EXPECT_GT(epsilon_rho(in), prev);
      EXPECT_GT(epsilon_eta(in), prev_eta);
      prev = epsilon_rho(in);
      prev_eta = epsilon_eta(in);
    }
  }
}

TEST(BoundInputs, Validation) {
  BoundInputs in = unit_inputs();
  in.lambda_minus = 2.0;
  EXPECT_THROW(kappa_rho(in), DomainError);
  in = unit_inputs();
  in.lambda_minus = 0.0;
  EXPECT_THROW(kappa_eta(in), DomainError);
  in = unit_inputs();
  in.ground_count = -1;
  EXPECT_THROW(epsilon_rho(in), DomainError);
}

TEST(DiameterFactor, BoundVanishesWithDiameter) {
  Stream rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const BoundInputs in = random_inputs(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 40; ++k) {
      const double b = kappa_rho(in) * diameter_factor(std::ldexp(1.0, -k), in.ground_count);
      EXPECT_LE(b, prev);
      prev = b;
    }
    EXPECT_LT(prev, 1e-9 * std::max(1.0, kappa_rho(in)));
  }
  EXPECT_DOUBLE_EQ(diameter_factor(0.5, 0), 1.0);
  EXPECT_DOUBLE_EQ(diameter_factor(2.0, 3), 8.0);
  EXPECT_DOUBLE_EQ(diameter_factor(0.5, 3), 0.5);
}

TEST(BlStar, IdenticalEventsGiveZero) {
  Stream rng(8);
  MarkedEventList ev;
  for (int i = 0; i < 20; ++i) ev.events.push_back({rng.uniform01(), {rng.uniform01(), rng.uniform01()}});
  const auto probes = make_probes(200, rng);
  const BlStarResult r = bl_star_bound(ev, ev, 0.1, probes);
  EXPECT_LT(r.empirical_sup, 1e-12);  // two separately accumulated sums
  EXPECT_DOUBLE_EQ(r.bound, 2.0);
}

TEST(BlStar, ProbesAreBoundedLipschitz) {
  Stream rng(9);
  const auto probes = make_probes(100, rng, 4.0);
  for (const RidgeProbe& f : probes) {
    for (int k = 0; k < 50; ++k) {
      const double t = rng.uniform01(), x = 0.01 + 3.98 * rng.uniform01(), y = 0.01 + 3.98 * rng.uniform01();
      const double h = 1e-3 * (rng.uniform01() + 0.1);
      const double dx = h * (2.0 * rng.uniform01() - 1.0), dy = h * (2.0 * rng.uniform01() - 1.0);
      const double dist = std::hypot(dx, dy);
      EXPECT_LE(std::abs(f(t, {x, y})), 1.0);
      EXPECT_LE(std::abs(f(t, {x + dx, y + dy}) - f(t, {x, y})), dist * (1.0 + 1e-9));
    }
  }
}

TEST(BlStar, DomainNormIsExactForSingleRidge) {
  // sin(w (x - 1/2)) on [0, 1]: sup sin(w / 2), Lipschitz w.
  const double w = 0.8;
  const RidgeProbe f({{1.0, 0.0, w, 0.0, -w / 2.0 - std::numbers::pi / 2.0}}, ProbeDomain{0, 1, 0, 1, 0, 1});
  const double norm = std::sin(w / 2.0) + w;
  EXPECT_NEAR(f(0.0, {1.0, 0.3}), std::sin(w / 2.0) / norm, 1e-14);
  EXPECT_NEAR(f(0.0, {0.5, 0.3}), 0.0, 1e-14);
  // A full period inside the box gives the global norm |a| (|w| + 1).
  const RidgeProbe g({{2.0, 0.0, 8.0, 0.0, 0.3}}, ProbeDomain{0, 1, 0, 1, 0, 1});
  EXPECT_NEAR(g(0.0, {(-0.3 + 2.0 * std::numbers::pi) / 8.0, 0.0}), 1.0 / 9.0, 1e-14);
  // Unbounded domain keeps the global norm.
  const RidgeProbe h({{1.0, 0.0, 0.8, 0.0, 0.0}});
  EXPECT_NEAR(h(0.0, {0.0, 0.0}), 1.0 / 1.8, 1e-14);
}

TEST(BlStar, CornerToCornerDisplacementIsNearlyAttained) {
  // Best bounded-Lipschitz value is 2D / (D + 2) for a single displaced point.
  Stream rng(12);
  const auto probes = make_probes(0, rng);
  MarkedEventList a, b;
  a.events.push_back({0.5, {0.0, 0.0}});
  b.events.push_back({0.5, {1.0, 1.0}});
  const double d = std::sqrt(2.0);
  const BlStarResult r = bl_star_bound(a, b, d, probes);
  EXPECT_LE(r.empirical_sup, 2.0 * d / (d + 2.0) + 1e-12);
  EXPECT_GT(r.empirical_sup, 0.5 * d);
}

TEST(BlStar, SingleDisplacedEventWithinDistance) {
  Stream rng(10);
  const auto probes = make_probes(500, rng);
  for (double d : {0.5, 0.1, 0.01}) {
    MarkedEventList a, b;
    a.events.push_back({0.3, {0.2, 0.4}});
    b.events.push_back({0.3, {0.2 + d * 0.6, 0.4 + d * 0.8}});
    const BlStarResult r = bl_star_bound(a, b, d, probes);
    EXPECT_DOUBLE_EQ(r.bound, d);
    EXPECT_LE(r.empirical_sup, d);
    EXPECT_GT(r.empirical_sup, 0.1 * d);
  }
}

TEST(BlStar, CellEmbeddingRespectsCountTimesDiameter) {
  Stream rng(11);
  const auto probes = make_probes(300, rng);
  for (int n : {1, 2, 4, 8, 16}) {
    const PartitionLevel level(n, 1.0);
    MarkedEventList a, b;
    for (int i = 0; i < 25; ++i) {
      const MarkedEvent e{rng.uniform01(), {rng.uniform01(), rng.uniform01()}};
      a.events.push_back(e);
      b.events.push_back({e.time, level.representative(cell_of_point(level, e.mark))});
    }
    const BlStarResult r = bl_star_bound(a, b, level.max_diameter(), probes);
    EXPECT_DOUBLE_EQ(r.bound, 25.0 * level.max_diameter());
    EXPECT_LE(r.empirical_sup, r.bound);
  }
  MarkedEventList one, two;
  one.events.resize(1);
  two.events.resize(2);
  EXPECT_THROW(bl_star_bound(one, two, 1.0, probes), DomainError);
}

TEST(VerifyBound, MarkIndependentIntensityHasZeroDiscrepancy) {
  auto s = test::two_state_scenario();
  s.model.intensity = {{2.0, 0.0}, {0.5, 0.0}};
  const std::vector<int> ladder = {1, 2, 4, 8};
  const BoundReport rep = verify_bound(s.model, s.dt, s.steps, s.events, ladder);
  for (const BoundRow& r : rep.rho) {
    EXPECT_EQ(r.tv_sup, 0.0);
    EXPECT_EQ(r.bound, 0.0);
    EXPECT_GE(r.margin, 0.0);
  }
  EXPECT_EQ(rep.violations(), 0u);
}

TEST(VerifyBound, AffineTwoStateLadderHoldsAndShrinks) {
  const auto s = test::two_state_scenario();
  const std::vector<int> ladder = {1, 2, 4, 8};
  const BoundReport rep = verify_bound(s.model, s.dt, s.steps, s.events, ladder);
  ASSERT_EQ(rep.rho.size(), 4u);
  EXPECT_EQ(rep.violations(), 0u);
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    EXPECT_DOUBLE_EQ(rep.rho[i].diam, 1.0 / ladder[i]);
    EXPECT_GT(rep.rho[i].tv_sup, 0.0);
    EXPECT_LE(rep.rho[i].tv_sup, rep.rho[i].bound);
    EXPECT_LE(rep.eta[i].tv_sup, rep.eta[i].bound);
  }
  // Four events, so the bound scales linearly with the diameter.
  for (std::size_t i = 1; i < ladder.size(); ++i)
    EXPECT_NEAR(rep.rho[i].bound / rep.rho[i - 1].bound, 0.5, 1e-12);
  // Least-squares slope of log tv_sup against log diam.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const BoundRow& r : rep.rho) {
    const double x = std::log(r.diam), y = std::log(r.tv_sup);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
  EXPECT_GT(slope, 0.5);
  EXPECT_LT(slope, 1.5);
}

TEST(VerifyBound, SingleCellWithSteepIntensityIsLooseButValid) {
  auto s = test::two_state_scenario();
  s.model.intensity = {{0.05, 4.0}, {4.05, -4.0}};
  const std::vector<int> ladder = {1};
  const BoundReport rep = verify_bound(s.model, s.dt, s.steps, s.events, ladder);
  EXPECT_GE(rep.rho[0].margin, 0.0);
  EXPECT_GT(rep.rho[0].bound, 100.0 * rep.rho[0].tv_sup);
}

TEST(VerifyBound, RandomInstancesWithMasksNeverViolate) {
  Stream rng(12);
  const std::vector<int> ladder = {1, 2, 4, 8, 16};
  for (int rep = 0; rep < 150; ++rep) {
    const OracleScenario s = random_scenario(rng, 3, 40, 6);
    std::vector<std::vector<int>> masks;
    for (int cells : ladder) {
      std::vector<int> m;
      for (int i = 0; i < cells; ++i)
        if (rng.uniform01() < 0.7) m.push_back(i);
      if (m.empty()) m.push_back(cells - 1);
      masks.push_back(m);
    }
    const BoundReport r = verify_bound(s.model, s.dt, s.steps, s.events, ladder, masks);
    ASSERT_EQ(r.rho_partial.size(), ladder.size());
    ASSERT_EQ(r.violations(), 0u) << "instance " << rep;
    for (const auto* rows : {&r.rho, &r.eta, &r.rho_partial, &r.eta_partial})
      for (const BoundRow& row : *rows) ASSERT_TRUE(std::isfinite(row.margin));
  }
}

TEST(VerifyBound, InputErrorsAndCsvSchema) {
  auto s = test::two_state_scenario();
  const std::vector<int> ladder = {1, 2};
  const std::vector<std::vector<int>> one_mask = {{0}};
  EXPECT_THROW(verify_bound(s.model, s.dt, s.steps, s.events, ladder, one_mask), DomainError);
  auto scaled = s.model;
  scaled.reference_scale = 2.0;
  EXPECT_THROW(verify_bound(scaled, s.dt, s.steps, s.events, ladder), ConfigError);
  const BoundReport rep = verify_bound(s.model, s.dt, s.steps, s.events, ladder);
  std::ostringstream os;
  write_bound_csv(os, rep.rho);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "level,diam,tv_sup,bound,margin");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
  }
  EXPECT_EQ(rows, 2);
}
