#pragma once

#include <stdexcept>
#include <vector>

namespace nodectl {

/// Closed real interval [lo, hi].
struct Interval {
  double lo{};
  double hi{};

  Interval() = default;
  Interval(double l, double h) : lo(l), hi(h) {
    if (!(lo <= hi)) throw std::invalid_argument("Interval: lo > hi");
  }

  double mid() const { return 0.5 * (lo + hi); }
  double radius() const { return 0.5 * (hi - lo); }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

/// Axis-aligned box, one interval per state component.
using Box = std::vector<Interval>;

}  // namespace nodectl
