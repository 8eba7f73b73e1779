#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mppf/error.hpp"
#include "mppf/parallel.hpp"
#include "mppf/rng.hpp"
#include "mppf/signal.hpp"
#include "mppf/weights.hpp"

namespace mppf {

/// Weighted particles. Log-weights are kept normalized between steps. Each
/// particle carries an id; its noise stream is keyed by (seed, id, step), so
/// results do not depend on storage order or on the worker count.
template <class State>
struct ParticleEnsemble {
  std::vector<State> particles;
  std::vector<double> log_weights;
  std::vector<std::uint64_t> ids;
  double t = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;

  std::size_t size() const { return particles.size(); }
  std::vector<double> weights() const { return weights_from_log(log_weights); }

  /// Indices ordered by particle id.
  std::vector<std::size_t> id_order() const {
    std::vector<std::size_t> order(size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    return order;
  }
};

/// init(id, stream) -> State
template <class State, class Init>
ParticleEnsemble<State> make_ensemble(std::size_t n, std::uint64_t seed, Init&& init) {
  if (n == 0) throw ConfigError("ensemble needs at least one particle");
  ParticleEnsemble<State> e;
  e.seed = seed;
  e.particles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Stream s = derive_stream(seed, StreamTag::kInit, i);
    e.particles.push_back(init(i, s));
    e.ids.push_back(i);
  }
  e.log_weights.assign(n, -std::log(static_cast<double>(n)));
  return e;
}

/// sum_i [dY_i log(lambda_i / mu_i) - (lambda_i - mu_i) dt]
template <class Count>
double log_weight_increment(std::span<const double> rates, std::span<const double> reference,
                            std::span<const Count> counts, double dt) {
  if (rates.size() != reference.size() || rates.size() != counts.size())
    throw DomainError("rate, reference and count sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(rates[i] > 0.0)) throw DomainError("nonpositive rate in cell " + std::to_string(i));
    if (!(reference[i] > 0.0)) throw DomainError("nonpositive reference rate in cell " + std::to_string(i));
    if (counts[i] != 0) acc += static_cast<double>(counts[i]) * std::log(rates[i] / reference[i]);
    acc -= (rates[i] - reference[i]) * dt;
  }
  return acc;
}

struct PfOptions {
  double ess_threshold = 0.5;  // resample when ESS < threshold * L
  unsigned workers = 1;
};

struct StepDiagnostics {
  std::uint64_t step = 0;
  double ess = 0.0;
  double loglik_increment = 0.0;
  bool resampled = false;
};

/// One bootstrap step: propagate(State&, Stream&), weight by loglik(const State&),
/// normalize, and resample systematically (in id order) when ESS drops.
template <class State, class Propagate, class LogLik>
StepDiagnostics pf_step(ParticleEnsemble<State>& e, Propagate&& propagate, LogLik&& loglik,
                        const PfOptions& opt = {}) {
  const std::size_t n = e.size();
  std::vector<double> delta(n);
  parallel_for(n, opt.workers, [&](std::size_t i) {
    Stream s = derive_stream(e.seed, StreamTag::kParticle, e.ids[i], e.step);
    propagate(e.particles[i], s);
    delta[i] = loglik(static_cast<const State&>(e.particles[i]));
  });

  StepDiagnostics d;
  d.step = e.step;
  const std::vector<std::size_t> order = e.id_order();
  std::vector<double> lw(n);
  for (std::size_t k = 0; k < n; ++k) lw[k] = e.log_weights[order[k]] + delta[order[k]];
  try {
    d.loglik_increment = normalize_log_weights(lw);
  } catch (const FilterDegeneracy& ex) {
    throw FilterDegeneracy(std::string(ex.what()) + " at step " + std::to_string(e.step) +
                           " (L = " + std::to_string(n) + ")");
  }
  d.ess = effective_sample_size(lw);

  std::vector<State> sorted;
  sorted.reserve(n);
  for (std::size_t k = 0; k < n; ++k) sorted.push_back(std::move(e.particles[order[k]]));

  if (d.ess < opt.ess_threshold * static_cast<double>(n)) {
    Stream rs = derive_stream(e.seed, StreamTag::kResample, e.step);
    const std::vector<std::size_t> anc = systematic_resample(weights_from_log(lw), rs.uniform01());
    std::vector<State> next;
    next.reserve(n);
    for (std::size_t k = 0; k < n; ++k) next.push_back(sorted[anc[k]]);
    sorted = std::move(next);
    lw.assign(n, -std::log(static_cast<double>(n)));
    d.resampled = true;
  }
  e.particles = std::move(sorted);
  e.log_weights = std::move(lw);
  // Storage order now equals id order; offspring get fresh ids 0..L-1.
  std::vector<std::uint64_t> ids(n);
  for (std::size_t k = 0; k < n; ++k) ids[k] = d.resampled ? k : e.ids[order[k]];
  e.ids = std::move(ids);
  ++e.step;
  return d;
}

/// Weighted mean of u (and v), accumulated in id order.
inline FieldState posterior_mean(const ParticleEnsemble<FieldState>& e) {
  if (e.size() == 0) throw DomainError("empty ensemble");
  FieldState m = e.particles.front();
  std::fill(m.u.begin(), m.u.end(), 0.0);
  std::fill(m.v.begin(), m.v.end(), 0.0);
  for (std::size_t i : e.id_order()) {
    const double w = std::exp(e.log_weights[i]);
    const FieldState& p = e.particles[i];
    for (std::size_t c = 0; c < m.u.size(); ++c) m.u[c] += w * p.u[c];
    for (std::size_t c = 0; c < m.v.size(); ++c) m.v[c] += w * p.v[c];
  }
  return m;
}

/// Posterior over a finite state space {0, ..., k-1}.
inline std::vector<double> posterior_distribution(const ParticleEnsemble<int>& e, int k) {
  std::vector<double> p(k, 0.0);
  for (std::size_t i : e.id_order()) p.at(e.particles[i]) += std::exp(e.log_weights[i]);
  return p;
}

}  // namespace mppf
