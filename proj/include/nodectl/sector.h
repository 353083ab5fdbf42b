#pragma once

// Incremental sector bounds of the tanh layers over a box, obtained by
// interval propagation through the network, and the block-diagonal
// multiplier matrices Q1 = BD(K1^1 W^1, ...), Q2 = BD(K2^1 W^1, ...).

#include <utility>
#include <vector>

#include "nodectl/interval.h"
#include "nodectl/nn_model.h"
#include "nodectl/numerics.h"

namespace nodectl {

struct SlopeBounds {
  double alpha{};
  double beta{};
};

struct LayerSector {
  double alpha{};                   // min over neurons
  double beta{};                    // max over neurons
  std::vector<SlopeBounds> per_neuron;
};

struct SectorBounds {
  std::vector<LayerSector> per_layer;        // hidden layers 1..k
  std::vector<Box> preactivation_ranges;     // one Box per hidden layer
};

struct QPair {
  Mat q1;
  Mat q2;
};

/// Exact range of W v + b over the box `input_ranges`.
Box AffinePreactivationInterval(const Mat& w, const Vec& b,
                                const Box& input_ranges);

/// Extreme values of tanh' = 1 - tanh^2 over v.
SlopeBounds TanhSlopeBounds(const Interval& v);

SectorBounds PropagateSectorBounds(const FeedforwardNet& net, const Box& box);

/// Layer-scalar bounds for layers first..last (1-based, inclusive) assembled
/// into BD(alpha_i W^i), BD(beta_i W^i).
QPair BuildQMatrices(const FeedforwardNet& net, const SectorBounds& bounds,
                     int first_layer, int last_layer);

/// Q over all hidden layers 1..k.
QPair BuildQMatrices(const FeedforwardNet& net, const SectorBounds& bounds);

/// Clamp applied to beta - alpha where an assembly divides by it.
inline constexpr double kMinSectorWidth = 1e-9;

}  // namespace nodectl
