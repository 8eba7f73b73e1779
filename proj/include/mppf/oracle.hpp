#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mppf/error.hpp"
#include "mppf/rng.hpp"

namespace mppf {

/// lambda(x) = intercept + slope * x on the mark space [0, 1].
struct AffineIntensity {
  double intercept = 1.0;
  double slope = 0.0;

  double at(double x) const { return intercept + slope * x; }
  double integral(double x0, double x1) const {
    return intercept * (x1 - x0) + 0.5 * slope * (x1 * x1 - x0 * x0);
  }
  double min() const { return std::min(intercept, intercept + slope); }
  double max() const { return std::max(intercept, intercept + slope); }

  friend bool operator==(const AffineIntensity&, const AffineIntensity&) = default;
};

/// Finite-state Markov signal with affine mark intensities on [0, 1].
struct FiniteStateModel {
  std::vector<std::vector<double>> generator;
  std::vector<AffineIntensity> intensity;
  std::vector<double> initial;
  double reference_scale = 1.0;  // reference density with respect to Lebesgue on [0, 1]

  int size() const { return static_cast<int>(initial.size()); }
  double mark_measure() const { return 1.0; }

  double lambda_minus() const {
    double m = intensity.front().min();
    for (const auto& f : intensity) m = std::min(m, f.min());
    return m;
  }
  double lambda_plus() const {
    double m = intensity.front().max();
    for (const auto& f : intensity) m = std::max(m, f.max());
    return m;
  }
  double lipschitz() const {
    double m = 0.0;
    for (const auto& f : intensity) m = std::max(m, std::abs(f.slope));
    return m;
  }
  double generator_norm() const {
    double m = 0.0;
    for (const auto& row : generator) {
      double s = 0.0;
      for (double g : row) s += std::abs(g);
      m = std::max(m, s);
    }
    return m;
  }

  void validate() const {
    const std::size_t k = initial.size();
    if (k == 0) throw ConfigError("finite-state model needs at least one state");
    if (generator.size() != k || intensity.size() != k)
      throw ConfigError("generator, intensity and initial distribution sizes differ");
    for (std::size_t i = 0; i < k; ++i) {
      if (generator[i].size() != k) throw ConfigError("generator must be square");
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (i != j && generator[i][j] < 0.0) throw ConfigError("negative off-diagonal generator rate");
        s += generator[i][j];
      }
      if (std::abs(s) > 1e-12) throw ConfigError("generator row " + std::to_string(i) + " does not sum to 0");
      if (!(intensity[i].min() > 0.0)) throw ConfigError("intensity must be positive on [0, 1]");
    }
    double p = 0.0;
    for (double v : initial) {
      if (v < 0.0) throw ConfigError("negative initial probability");
      p += v;
    }
    if (std::abs(p - 1.0) > 1e-12) throw ConfigError("initial distribution does not sum to 1");
    if (!(reference_scale > 0.0)) throw ConfigError("reference_scale must be > 0");
  }
};

/// Event observed at the end of step `step` (0-based) with mark in [0, 1].
struct OracleEvent {
  std::size_t step = 0;
  double mark = 0.0;

  friend bool operator==(const OracleEvent&, const OracleEvent&) = default;
};

/// Dyadic-style partition of [0, 1] into equal half-open intervals (last one closed).
class IntervalPartition {
 public:
  explicit IntervalPartition(int cells = 1) : n_(cells) {
    if (n_ < 1) throw ConfigError("interval partition needs at least one cell");
  }
  int size() const { return n_; }
  double diameter() const { return 1.0 / n_; }
  double lower(int i) const { return static_cast<double>(i) / n_; }
  double upper(int i) const { return i + 1 == n_ ? 1.0 : static_cast<double>(i + 1) / n_; }
  double center(int i) const { return 0.5 * (lower(i) + upper(i)); }
  int index(double x) const {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("mark outside [0, 1]: " + std::to_string(x));
    int i = std::clamp(static_cast<int>(std::floor(x * n_)), 0, n_ - 1);
    if (i > 0 && x < lower(i)) --i;
    if (i + 1 < n_ && x >= upper(i)) ++i;
    return i;
  }

 private:
  int n_;
};

/// What the filter sees of the marks: exact positions, cell-averaged intensity
/// at a given resolution, or cell-averaged intensity on an observed subset only.
class ObservationChannel {
 public:
  static ObservationChannel exact() { return ObservationChannel(Kind::kExact, IntervalPartition(1), {}); }
  static ObservationChannel resolution(int cells) {
    return ObservationChannel(Kind::kResolution, IntervalPartition(cells), {});
  }
  static ObservationChannel partial(int cells, std::vector<int> observed) {
    std::sort(observed.begin(), observed.end());
    observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
    if (observed.empty()) throw DomainError("partial channel needs an observed cell");
    if (observed.front() < 0 || observed.back() >= cells) throw DomainError("observed cell out of range");
    return ObservationChannel(Kind::kPartial, IntervalPartition(cells), std::move(observed));
  }

  bool is_exact() const { return kind_ == Kind::kExact; }
  const IntervalPartition& partition() const { return part_; }
  const std::vector<int>& observed() const { return observed_; }

  bool sees(double x) const {
    if (kind_ != Kind::kPartial) return true;
    return std::binary_search(observed_.begin(), observed_.end(), part_.index(x));
  }

  /// Intensity used at an event with mark x: lambda(x), or its cell average.
  double event_intensity(const AffineIntensity& f, double x) const {
    if (kind_ == Kind::kExact) return f.at(x);
    const int i = part_.index(x);
    return f.integral(part_.lower(i), part_.upper(i)) / (part_.upper(i) - part_.lower(i));
  }

  /// Integral of the intensity over the observed region.
  double compensator(const AffineIntensity& f) const {
    if (kind_ != Kind::kPartial) return f.integral(0.0, 1.0);
    double s = 0.0;
    for (int i : observed_) s += f.integral(part_.lower(i), part_.upper(i));
    return s;
  }

  double observed_measure() const {
    if (kind_ != Kind::kPartial) return 1.0;
    double s = 0.0;
    for (int i : observed_) s += part_.upper(i) - part_.lower(i);
    return s;
  }

 private:
  enum class Kind { kExact, kResolution, kPartial };
  ObservationChannel(Kind k, IntervalPartition p, std::vector<int> obs)
      : kind_(k), part_(p), observed_(std::move(obs)) {}

  Kind kind_;
  IntervalPartition part_;
  std::vector<int> observed_;
};

using Matrix = std::vector<std::vector<double>>;

/// One-step transition matrix sum_{k<=4} (G dt)^k / k!, i.e. the classical
/// fourth-order Runge-Kutta propagator of the forward equation.
inline Matrix transition_matrix(const FiniteStateModel& model, double dt) {
  if (!(dt > 0.0)) throw ConfigError("oracle dt must be positive");
  if (model.generator_norm() * dt > 0.1 + 1e-15)
    throw ConfigError("oracle step too large: ||G|| dt = " + std::to_string(model.generator_norm() * dt) +
                      " > 0.1");
  const std::size_t k = model.initial.size();
  Matrix a(k, std::vector<double>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) a[i][j] = model.generator[i][j] * dt;
  Matrix p(k, std::vector<double>(k, 0.0));
  Matrix term(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) p[i][i] = term[i][i] = 1.0;
  for (int order = 1; order <= 4; ++order) {
    Matrix next(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t l = 0; l < k; ++l)
        for (std::size_t j = 0; j < k; ++j) next[i][j] += term[i][l] * a[l][j];
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        next[i][j] /= order;
        p[i][j] += next[i][j];
      }
    term = std::move(next);
  }
  return p;
}

struct PosteriorVector {
  std::vector<double> rho;
  std::vector<double> eta;
  double t = 0.0;
};

inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("tv_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

inline std::vector<double> normalized(std::span<const double> rho) {
  const double z = std::accumulate(rho.begin(), rho.end(), 0.0);
  if (!(z > 0.0)) throw IntegratorError("unnormalized posterior has nonpositive mass");
  std::vector<double> eta(rho.begin(), rho.end());
  for (double& v : eta) v /= z;
  return eta;
}

/// Zakai and Kushner-Stratonovich recursions for one model, step and channel.
/// Within a step: transition, then the no-event survival factor over dt, then
/// one multiplicative factor per observed event.
class OracleStepper {
 public:
  OracleStepper(const FiniteStateModel& model, double dt, ObservationChannel channel)
      : model_(model), dt_(dt), channel_(std::move(channel)), p_(transition_matrix(model, dt)) {
    model_.validate();
    const double ref = model_.reference_scale;
    for (const auto& f : model_.intensity)
      decay_.push_back(std::exp(-(channel_.compensator(f) - ref * channel_.observed_measure()) * dt_));
  }

  const Matrix& transition() const { return p_; }
  const ObservationChannel& channel() const { return channel_; }
  double dt() const { return dt_; }

  /// Per-state likelihood factor of one step with the given event marks.
  std::vector<double> step_factor(std::span<const double> marks) const {
    std::vector<double> z(decay_);
    for (double x : marks) {
      if (!channel_.sees(x)) continue;
      for (std::size_t k = 0; k < z.size(); ++k)
        z[k] *= channel_.event_intensity(model_.intensity[k], x) / model_.reference_scale;
    }
    return z;
  }

  std::vector<double> propagate(std::span<const double> mu) const {
    std::vector<double> out(mu.size(), 0.0);
    for (std::size_t i = 0; i < mu.size(); ++i)
      for (std::size_t j = 0; j < mu.size(); ++j) out[j] += mu[i] * p_[i][j];
    return out;
  }

  std::vector<double> zakai_step(std::span<const double> rho, std::span<const double> marks) const {
    std::vector<double> out = propagate(rho);
    const std::vector<double> z = step_factor(marks);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= z[k];
    check(out);
    return out;
  }

  /// Normalized recursion: exact solution of the between-event equation
  /// d eta_k = -eta_k (c_k - sum_j eta_j c_j) dt, then the jump update
  /// eta_k <- eta_k + eta_k (f_k - <eta, f>) / <eta, f> per event.
  std::vector<double> ks_step(std::span<const double> eta, std::span<const double> marks) const {
    std::vector<double> out = propagate(eta);
    double z = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) z += out[k] * decay_[k];
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = out[k] * decay_[k] / z;
    for (double x : marks) {
      if (!channel_.sees(x)) continue;
      double mean = 0.0;
      std::vector<double> f(out.size());
      for (std::size_t k = 0; k < out.size(); ++k) {
        f[k] = channel_.event_intensity(model_.intensity[k], x);
        mean += out[k] * f[k];
      }
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += out[k] * (f[k] - mean) / mean;
    }
    check(out);
    return out;
  }

 private:
  static void check(const std::vector<double>& v) {
    for (double x : v)
      if (!std::isfinite(x) || x < -1e-14) throw IntegratorError("posterior entry " + std::to_string(x));
  }

  FiniteStateModel model_;
  double dt_;
  ObservationChannel channel_;
  Matrix p_;
  std::vector<double> decay_;
};

inline std::vector<std::vector<double>> marks_by_step(std::span<const OracleEvent> events, std::size_t steps) {
  std::vector<std::vector<double>> out(steps);
  for (const OracleEvent& e : events) {
    if (e.step >= steps) throw DomainError("event step beyond horizon");
    out[e.step].push_back(e.mark);
  }
  return out;
}

/// rho and eta at t = 0, dt, ..., steps * dt, from the two recursions run independently.
inline std::vector<PosteriorVector> run_exact_filter(const FiniteStateModel& model, const ObservationChannel& channel,
                                                     double dt, std::size_t steps,
                                                     std::span<const OracleEvent> events) {
  const OracleStepper stepper(model, dt, channel);
  const auto marks = marks_by_step(events, steps);
  std::vector<PosteriorVector> out;
  PosteriorVector p{model.initial, model.initial, 0.0};
  out.push_back(p);
  for (std::size_t j = 0; j < steps; ++j) {
    p.rho = stepper.zakai_step(p.rho, marks[j]);
    p.eta = stepper.ks_step(p.eta, marks[j]);
    p.t = static_cast<double>(j + 1) * dt;
    out.push_back(p);
  }
  return out;
}

inline constexpr double kMaxEnumeratedPaths = 1e6;

/// Posterior at the final step by summing over every state path X_0..X_N:
/// pi(X_0) * prod P(X_j, X_{j+1}) * prod z_j(X_{j+1}).
inline PosteriorVector brute_force_posterior(const FiniteStateModel& model, const ObservationChannel& channel,
                                             double dt, std::size_t steps, std::span<const OracleEvent> events) {
  const OracleStepper stepper(model, dt, channel);
  const std::size_t k = model.initial.size();
  if (std::pow(static_cast<double>(k), static_cast<double>(steps + 1)) > kMaxEnumeratedPaths)
    throw DomainError("path enumeration over " + std::to_string(k) + "^" + std::to_string(steps + 1) +
                      " paths exceeds the guard; shrink the instance");
  const auto marks = marks_by_step(events, steps);
  std::vector<std::vector<double>> z;
  for (std::size_t j = 0; j < steps; ++j) z.push_back(stepper.step_factor(marks[j]));
  const Matrix& p = stepper.transition();

  PosteriorVector out;
  out.rho.assign(k, 0.0);
  out.t = static_cast<double>(steps) * dt;
  std::vector<std::size_t> path(steps + 1, 0);
  while (true) {
    double w = model.initial[path[0]];
    for (std::size_t j = 0; j < steps && w != 0.0; ++j) w *= p[path[j]][path[j + 1]] * z[j][path[j + 1]];
    out.rho[path[steps]] += w;
    std::size_t d = 0;
    while (d <= steps && ++path[d] == k) path[d++] = 0;
    if (d > steps) break;
  }
  out.eta = normalized(out.rho);
  return out;
}

struct OracleScenario {
  FiniteStateModel model;
  double dt = 0.05;
  std::size_t steps = 8;
  std::vector<OracleEvent> events;
};

/// Random small instance: K in [1, max_states], steps in [1, max_steps],
/// up to max_events events, affine intensities positive on [0, 1].
inline OracleScenario random_scenario(Stream& rng, int max_states = 3, std::size_t max_steps = 8,
                                      std::size_t max_events = 3) {
  auto uni = [&](double a, double b) { return a + (b - a) * rng.uniform01(); };
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.uniform01() * static_cast<double>(hi - lo + 1));
  };
  OracleScenario s;
  const int k = static_cast<int>(pick(1, static_cast<std::size_t>(max_states)));
  s.model.generator.assign(k, std::vector<double>(k, 0.0));
  for (int i = 0; i < k; ++i) {
    double row = 0.0;
    for (int j = 0; j < k; ++j)
      if (i != j) row += s.model.generator[i][j] = uni(0.0, 2.0);
    s.model.generator[i][i] = -row;
  }
  for (int i = 0; i < k; ++i) {
    const double a = uni(0.2, 3.0);
    const double b = uni(-0.9 * a, 3.0);
    s.model.intensity.push_back({a, b});
  }
  std::vector<double> pi(k);
  for (double& v : pi) v = uni(0.05, 1.0);
  const double z = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (double& v : pi) v /= z;
  s.model.initial = pi;
  s.steps = pick(1, max_steps);
  s.dt = uni(0.02, 0.1) / std::max(1.0, s.model.generator_norm());
  const std::size_t n = pick(0, max_events);
  for (std::size_t e = 0; e < n; ++e) s.events.push_back({pick(0, s.steps - 1), uni(0.0, 1.0)});
  std::sort(s.events.begin(), s.events.end(),
            [](const OracleEvent& a, const OracleEvent& b) { return a.step < b.step; });
  return s;
}

}  // namespace mppf
