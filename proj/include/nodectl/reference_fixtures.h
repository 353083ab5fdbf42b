#pragma once

// Published learned models for the pendulum and the path-following vehicle,
// together with the controller values printed alongside them. Values are
// 4-decimal roundings, so plug-in checks against them need loose tolerances.

#include <string>
#include <vector>

#include "nodectl/nn_model.h"
#include "nodectl/numerics.h"

namespace nodectl {

struct ReferenceCase {
  std::string name;
  NodeModel model;  // epsilon and box as printed
  Mat g;            // [0; 1] in both cases
  // Printed controller.
  Mat S;
  Mat Y;
  Mat H;
  double mu = 0.0;
  double radius = 0.0;
  /// Printed per-layer slope lower bounds (upper bounds are 1).
  std::vector<double> printed_alpha;
  std::vector<Vec> initial_conditions;
};

/// k = 1, five tanh neurons, box [-2, 2]^2.
ReferenceCase PendulumReference();
/// k = 2, five + five tanh neurons, box [-1, 1]^2.
ReferenceCase VehicleReference();

/// Slope lower bound consistent with the printed single-layer synthesis
/// constants 102850 and 453.5455 for the pendulum.
inline constexpr double kPendulumSynthesisAlpha = 0.9956;

}  // namespace nodectl
