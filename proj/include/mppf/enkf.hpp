#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mppf/error.hpp"
#include "mppf/filter.hpp"
#include "mppf/observation.hpp"
#include "mppf/parallel.hpp"
#include "mppf/rng.hpp"
#include "mppf/signal.hpp"

namespace mppf {

struct EnkfConfig {
  std::size_t members = 20;
  std::vector<double> obs_variance;  // sigma^2 per observed cell (rate units)
  double inflation = 1.0;
  double variance_floor = 1e-6;
  unsigned workers = 1;

  void validate(std::size_t observed_cells) const {
    if (members < 1) throw ConfigError("EnKF needs at least one member");
    if (inflation < 1.0) throw ConfigError("EnKF inflation must be >= 1");
    if (!(variance_floor > 0.0)) throw ConfigError("EnKF variance floor must be > 0");
    if (obs_variance.size() != observed_cells)
      throw ConfigError("EnKF observation variance has wrong length");
  }
};

/// Per-cell sample variance (ddof = 1) of the count increments, divided by dt.
inline std::vector<double> estimate_obs_variance(const CountFrameSeries& series) {
  const std::size_t f = series.frame_count();
  if (f < 2) throw DomainError("variance estimate needs at least two frames");
  const std::size_t n = series.cell_count();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double mean = 0.0;
    for (std::size_t j = 0; j < f; ++j) mean += series.counts[j * n + k];
    mean /= static_cast<double>(f);
    double ss = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      const double d = series.counts[j * n + k] - mean;
      ss += d * d;
    }
    out[k] = ss / static_cast<double>(f - 1) / series.dt;
  }
  return out;
}

struct EnkfDiagnostics {
  std::uint64_t step = 0;
  bool regularized = false;
  double jitter = 0.0;
};

namespace detail {
/// Solve M z = rhs for symmetric positive semidefinite M: LDLT, falling back to
/// a jittered complete orthogonal decomposition when M is (near) singular.
inline Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& M, const Eigen::MatrixXd& rhs, EnkfDiagnostics& d) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive() &&
            ldlt.vectorD().minCoeff() > 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff());
  Eigen::MatrixXd z;
  if (ok) {
    z = ldlt.solve(rhs);
    ok = z.allFinite();
  }
  if (!ok) {
    d.regularized = true;
    d.jitter = 1e-8 * std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
    Eigen::MatrixXd Mj = M;
    Mj.diagonal().array() += d.jitter;
    z = Mj.completeOrthogonalDecomposition().solve(rhs);
  }
  return z;
}
}  // namespace detail

/// Stochastic EnKF analysis with perturbed observations, in place on the columns
/// of X (state x members). HX holds predicted observations per member, y the
/// observation, r the diagonal observation variance. The gain C_xy (C_yy + R)^{-1}
/// is applied through whichever system is smaller:
///   m <= L: X += A Ha^T (Ha Ha^T + (L-1) R)^{-1} (D - HX)
///   m >  L: X += A S^{-1} Ha^T R^{-1} (D - HX), S = (L-1) I + Ha^T R^{-1} Ha
inline EnkfDiagnostics enkf_analysis(Eigen::MatrixXd& X, Eigen::MatrixXd HX, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& r, double inflation, Stream& rng) {
  const Eigen::Index L = X.cols();
  const Eigen::Index m = y.size();
  EnkfDiagnostics d;
  const Eigen::VectorXd xm = X.rowwise().mean();
  const Eigen::VectorXd hm = HX.rowwise().mean();
  Eigen::MatrixXd A = (X.colwise() - xm) * inflation;
  const Eigen::MatrixXd Ha = (HX.colwise() - hm) * inflation;
  X = A.colwise() + xm;
  HX = Ha.colwise() + hm;

  std::normal_distribution<double> normal;
  Eigen::MatrixXd innov(m, L);
  for (Eigen::Index j = 0; j < L; ++j)
    for (Eigen::Index i = 0; i < m; ++i) innov(i, j) = y(i) + std::sqrt(r(i)) * normal(rng) - HX(i, j);

  if (m <= L) {
    Eigen::MatrixXd M = Ha * Ha.transpose();
    M.diagonal() += static_cast<double>(L - 1) * r;
    X += (A * Ha.transpose()) * detail::spd_solve(M, innov, d);
  } else {
    const Eigen::MatrixXd HaR = r.cwiseInverse().asDiagonal() * Ha;  // R^{-1} Ha
    Eigen::MatrixXd S = Ha.transpose() * HaR;
    S.diagonal().array() += static_cast<double>(L - 1);
    X += A * detail::spd_solve(S, HaR.transpose() * innov, d);
  }
  return d;
}

struct EnkfEnsemble {
  std::vector<FieldState> members;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

inline EnkfEnsemble make_enkf_ensemble(const SignalModel& model, std::size_t members, std::uint64_t seed) {
  if (members == 0) throw ConfigError("EnKF needs at least one member");
  EnkfEnsemble e;
  e.seed = seed;
  for (std::size_t i = 0; i < members; ++i) {
    Stream s = derive_stream(seed, StreamTag::kInit, i);
    e.members.push_back(model.initial_state(s));
  }
  return e;
}

inline FieldState ensemble_mean(const EnkfEnsemble& e) {
  FieldState m = e.members.front();
  const double w = 1.0 / static_cast<double>(e.members.size());
  std::fill(m.u.begin(), m.u.end(), 0.0);
  std::fill(m.v.begin(), m.v.end(), 0.0);
  for (const FieldState& s : e.members) {
    for (std::size_t c = 0; c < m.u.size(); ++c) m.u[c] += w * s.u[c];
    for (std::size_t c = 0; c < m.v.size(); ++c) m.v[c] += w * s.v[c];
  }
  return m;
}

/// Forecast every member one signal step, then assimilate one count frame with
/// predicted observations h(x) = rate * dt and R = diag(sigma^2 dt).
inline EnkfDiagnostics enkf_step(EnkfEnsemble& e, const SignalModel& model, const ObservationOperator& obs,
                                 std::span<const std::uint32_t> frame, double dt, const EnkfConfig& cfg) {
  const std::size_t L = e.members.size();
  const std::size_t m = obs.cells().size();
  cfg.validate(m);
  if (frame.size() != m) throw DomainError("frame does not match observed cells");
  parallel_for(L, cfg.workers, [&](std::size_t i) {
    Stream s = derive_stream(e.seed, StreamTag::kParticle, i, e.step);
    model.step(e.members[i], s);
  });

  const std::size_t nu = e.members.front().u.size();
  const std::size_t nv = e.members.front().v.size();
  Eigen::MatrixXd X(nu + nv, L);
  Eigen::MatrixXd HX(m, L);
  for (std::size_t j = 0; j < L; ++j) {
    const FieldState& s = e.members[j];
    for (std::size_t c = 0; c < nu; ++c) X(c, j) = s.u[c];
    for (std::size_t c = 0; c < nv; ++c) X(nu + c, j) = s.v[c];
    const std::vector<double> rates = obs.predicted_rates(s);
    for (std::size_t k = 0; k < m; ++k) HX(k, j) = rates[k] * dt;
  }
  Eigen::VectorXd y(m), r(m);
  for (std::size_t k = 0; k < m; ++k) {
    y(k) = frame[k];
    r(k) = std::max(cfg.obs_variance[k], cfg.variance_floor) * dt;
  }
  Stream rng = derive_stream(e.seed, StreamTag::kEnkf, e.step);
  EnkfDiagnostics d = enkf_analysis(X, std::move(HX), y, r, cfg.inflation, rng);
  d.step = e.step;
  for (std::size_t j = 0; j < L; ++j) {
    FieldState& s = e.members[j];
    for (std::size_t c = 0; c < nu; ++c) s.u[c] = X(c, j);
    for (std::size_t c = 0; c < nv; ++c) s.v[c] = X(nu + c, j);
  }
  ++e.step;
  return d;
}

struct EnkfRun {
  std::vector<FieldState> estimates;
  std::size_t regularized_steps = 0;
};

inline EnkfRun run_enkf(const SignalModel& model, const ObservationOperator& obs, const CountFrameSeries& series,
                        const EnkfConfig& cfg, std::uint64_t seed, const EstimateSink& sink = nullptr) {
  if (series.cells != obs.cells() || !(series.partition == obs.level()))
    throw DomainError("count series does not match observation operator");
  if (series.dt != model.dt()) throw ConfigError("observation dt differs from signal dt");
  EnkfEnsemble e = make_enkf_ensemble(model, cfg.members, seed);
  EnkfRun run;
  for (std::size_t j = 0; j < series.frame_count(); ++j) {
    if (enkf_step(e, model, obs, series.frame(j), series.dt, cfg).regularized) ++run.regularized_steps;
    FieldState est = ensemble_mean(e);
    if (sink) {
      sink(j, est);
    } else {
      run.estimates.push_back(std::move(est));
    }
  }
  return run;
}

}  // namespace mppf
