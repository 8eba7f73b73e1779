#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mppf/oracle.hpp"
#include "mppf/particle_filter.hpp"

namespace mppf {

/// Bootstrap particle filter on a finite-state model. Particles are state
/// indices moved by the one-step transition matrix and weighted by the same
/// per-state step factor as the exact recursion. Returns the posterior after
/// every step (steps entries).
inline std::vector<std::vector<double>> run_oracle_particle_filter(const FiniteStateModel& model,
                                                                   const ObservationChannel& channel, double dt,
                                                                   std::size_t steps,
                                                                   std::span<const OracleEvent> events,
                                                                   std::size_t particles, std::uint64_t seed,
                                                                   const PfOptions& opt = {}) {
  const OracleStepper stepper(model, dt, channel);
  const auto marks = marks_by_step(events, steps);
  const Matrix& p = stepper.transition();
  const int k = model.size();
  auto draw = [](std::span<const double> probs, Stream& s) {
    double u = s.uniform01();
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      if (u < probs[i]) return static_cast<int>(i);
      u -= probs[i];
    }
    return static_cast<int>(probs.size()) - 1;
  };
  auto ens = make_ensemble<int>(particles, seed, [&](std::size_t, Stream& s) { return draw(model.initial, s); });
  std::vector<std::vector<double>> out;
  for (std::size_t j = 0; j < steps; ++j) {
    const std::vector<double> z = stepper.step_factor(marks[j]);
    pf_step(
        ens, [&](int& x, Stream& s) { x = draw(p[x], s); }, [&](int x) { return std::log(z[x]); }, opt);
    out.push_back(posterior_distribution(ens, k));
  }
  return out;
}

}  // namespace mppf
