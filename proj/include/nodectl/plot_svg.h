#pragma once

// Static SVG time-series plots: one panel per state component and, with an
// envelope, a panel of |x(t) - x*| against the predicted bound.

#include <optional>
#include <string>
#include <vector>

#include "nodectl/dynamics_sim.h"

namespace nodectl {

struct EnvelopeOverlay {
  Vec x_star;
  double c = 1.0;       // multiplies d0
  double rate = 0.0;    // gamma / 2
  double radius = 0.0;  // t -> infinity limit
};

struct PlotOptions {
  std::string title;
  int width = 720;
  int panel_height = 220;
  int max_points = 800;  // polyline decimation
  std::optional<EnvelopeOverlay> envelope;
};

/// Throws std::invalid_argument when `trajectories` is empty.
std::string PlotSvg(const std::vector<Trajectory>& trajectories,
                    const PlotOptions& options = {});

}  // namespace nodectl
