#pragma once

#include "mppf/oracle.hpp"

namespace mppf::test {

/// Fixed two-state model with mark-dependent affine intensities and four events.
inline OracleScenario two_state_scenario() {
  OracleScenario s;
  s.model.generator = {{-1.0, 1.0}, {2.0, -2.0}};
  s.model.intensity = {{1.0, 2.0}, {3.0, -2.0}};
  s.model.initial = {0.5, 0.5};
  s.dt = 0.02;
  s.steps = 20;
  s.events = {{2, 0.9}, {7, 0.1}, {11, 0.8}, {16, 0.95}};
  return s;
}

}  // namespace mppf::test
