#include "nodectl/sector.h"

#include <algorithm>
#include <cmath>

namespace nodectl {

Box AffinePreactivationInterval(const Mat& w, const Vec& b,
                                const Box& input_ranges) {
  if (w.cols() != static_cast<Eigen::Index>(input_ranges.size()) ||
      b.size() != w.rows()) {
    throw DimensionError("AffinePreactivationInterval: shape mismatch");
  }
  Vec mid(w.cols()), rad(w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    mid(j) = input_ranges[static_cast<size_t>(j)].mid();
    rad(j) = input_ranges[static_cast<size_t>(j)].radius();
  }
  const Vec center = w * mid + b;
  const Vec spread = w.cwiseAbs() * rad;
  Box out;
  out.reserve(static_cast<size_t>(w.rows()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    out.emplace_back(center(i) - spread(i), center(i) + spread(i));
  }
  return out;
}

SlopeBounds TanhSlopeBounds(const Interval& v) {
  auto slope = [](double s) {
    const double t = std::tanh(s);
    return 1.0 - t * t;
  };
  const double far = std::max(std::abs(v.lo), std::abs(v.hi));
  const double near = v.contains(0.0) ? 0.0 : std::min(std::abs(v.lo), std::abs(v.hi));
  return {slope(far), slope(near)};
}

SectorBounds PropagateSectorBounds(const FeedforwardNet& net, const Box& box) {
  net.Validate();
  if (static_cast<int>(box.size()) != net.input_dim()) {
    throw DimensionError("PropagateSectorBounds: box dimension mismatch");
  }
  SectorBounds out;
  Box inputs = box;
  const int k = net.hidden_layers();
  for (int layer = 0; layer < k; ++layer) {
    const size_t li = static_cast<size_t>(layer);
    Box pre = AffinePreactivationInterval(net.weights[li], net.biases[li], inputs);
    LayerSector sector;
    sector.alpha = 1.0;
    sector.beta = 0.0;
    Box next;
    for (const Interval& iv : pre) {
      const SlopeBounds sb = TanhSlopeBounds(iv);
      sector.per_neuron.push_back(sb);
      sector.alpha = std::min(sector.alpha, sb.alpha);
      sector.beta = std::max(sector.beta, sb.beta);
      next.emplace_back(std::tanh(iv.lo), std::tanh(iv.hi));
    }
    out.per_layer.push_back(std::move(sector));
    out.preactivation_ranges.push_back(std::move(pre));
    inputs = std::move(next);
  }
  return out;
}

QPair BuildQMatrices(const FeedforwardNet& net, const SectorBounds& bounds,
                     int first_layer, int last_layer) {
  if (static_cast<int>(bounds.per_layer.size()) != net.hidden_layers()) {
    throw DimensionError("BuildQMatrices: bounds computed for another network");
  }
  if (first_layer < 1 || last_layer > net.hidden_layers() ||
      first_layer > last_layer) {
    throw DimensionError("BuildQMatrices: invalid layer range");
  }
  std::vector<Mat> b1, b2;
  for (int i = first_layer; i <= last_layer; ++i) {
    const size_t li = static_cast<size_t>(i - 1);
    const LayerSector& s = bounds.per_layer[li];
    if (static_cast<Eigen::Index>(s.per_neuron.size()) != net.weights[li].rows()) {
      throw DimensionError("BuildQMatrices: neuron count mismatch");
    }
    b1.push_back(s.alpha * net.weights[li]);
    b2.push_back(s.beta * net.weights[li]);
  }
  return {BlockDiag(b1), BlockDiag(b2)};
}

QPair BuildQMatrices(const FeedforwardNet& net, const SectorBounds& bounds) {
  return BuildQMatrices(net, bounds, 1, net.hidden_layers());
}

}  // namespace nodectl
