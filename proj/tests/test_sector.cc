#include <gtest/gtest.h>

#include <cmath>

#include "nodectl/lmi_cert.h"
#include "nodectl/reference_fixtures.h"
#include "nodectl/sector.h"
#include "test_util.h"

namespace nodectl {
namespace {

using testing::Rng;

double TanhSlope(double v) {
  const double t = std::tanh(v);
  return 1.0 - t * t;
}

TEST(AffineInterval, Examples) {
  const Box id = AffinePreactivationInterval(Mat::Identity(3, 3), Vec::Zero(3),
                                             testing::UnitBox(3));
  for (const auto& iv : id) {
    EXPECT_DOUBLE_EQ(iv.lo, -1.0);
    EXPECT_DOUBLE_EQ(iv.hi, 1.0);
  }
  Mat w(1, 2);
  w << 2.0, -3.0;
  const Box r = AffinePreactivationInterval(w, Vec::Constant(1, 1.0),
                                            {Interval(0, 1), Interval(0, 1)});
  EXPECT_NEAR(r[0].lo, -2.0, 1e-15);
  EXPECT_NEAR(r[0].hi, 3.0, 1e-15);
}

TEST(AffineInterval, PendulumFirstNeuron) {
  const ReferenceCase rc = PendulumReference();
  const Mat& w = rc.model.net.weights[0];
  const Box r = AffinePreactivationInterval(w, rc.model.net.biases[0], rc.model.box);
  const double half = 2.0 * (std::abs(w(0, 0)) + std::abs(w(0, 1)));
  EXPECT_NEAR(half, 0.093, 1e-3);
  EXPECT_NEAR(r[0].hi - r[0].lo, 2.0 * half, 1e-12);
  EXPECT_NEAR(r[0].lo, -0.093, 1e-3);
  EXPECT_NEAR(r[0].hi, 0.093, 1e-3);
}

TEST(AffineInterval, CornerEnumerationOracle) {
  Rng rng(47);
  for (int c = 0; c < 100; ++c) {
    const int n = rng.Int(1, 4), m = rng.Int(1, 4);
    const Mat w = rng.Gaussian(m, n);
    const Vec b = rng.GaussianVec(m);
    Box box;
    for (int j = 0; j < n; ++j) {
      const double lo = rng.Uniform(-2, 1);
      box.emplace_back(lo, lo + rng.Uniform(0, 2));
    }
    const Box r = AffinePreactivationInterval(w, b, box);
    Vec lo = Vec::Constant(m, INFINITY), hi = Vec::Constant(m, -INFINITY);
    for (int mask = 0; mask < (1 << n); ++mask) {
      Vec x(n);
      for (int j = 0; j < n; ++j) x(j) = (mask >> j & 1) ? box[j].hi : box[j].lo;
      const Vec v = w * x + b;
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    for (int i = 0; i < m; ++i) {
      EXPECT_NEAR(r[i].lo, lo(i), 1e-12) << "case " << c;
      EXPECT_NEAR(r[i].hi, hi(i), 1e-12) << "case " << c;
    }
  }
}

TEST(TanhSlope, Examples) {
  auto s = TanhSlopeBounds(Interval(0, 0));
  EXPECT_DOUBLE_EQ(s.alpha, 1.0);
  EXPECT_DOUBLE_EQ(s.beta, 1.0);
  s = TanhSlopeBounds(Interval(-1, 1));
  EXPECT_NEAR(s.alpha, 0.419974341614, 1e-12);
  EXPECT_DOUBLE_EQ(s.beta, 1.0);
  s = TanhSlopeBounds(Interval(2, 3));
  EXPECT_NEAR(s.alpha, 0.009866037165, 1e-12);
  EXPECT_NEAR(s.beta, 0.070650824853, 1e-12);
}

TEST(TanhSlope, MatchesGridSearch) {
  Rng rng(53);
  for (int c = 0; c < 100; ++c) {
    const double lo = rng.Uniform(-4, 4);
    const double hi = lo + rng.Uniform(0, 4);
    const SlopeBounds s = TanhSlopeBounds(Interval(lo, hi));
    double gmin = INFINITY, gmax = -INFINITY;
    const int n = 20000;
    for (int i = 0; i <= n; ++i) {
      const double v = lo + (hi - lo) * i / n;
      gmin = std::min(gmin, TanhSlope(v));
      gmax = std::max(gmax, TanhSlope(v));
    }
    if (lo < 0 && hi > 0) gmax = std::max(gmax, TanhSlope(0.0));
    EXPECT_NEAR(s.alpha, gmin, 1e-12) << "case " << c;
    EXPECT_NEAR(s.beta, gmax, 1e-6) << "case " << c;
    EXPECT_GE(s.beta, gmax - 1e-15);
    EXPECT_LE(s.alpha, gmin + 1e-15);
  }
}

TEST(Propagate, ZeroWeightNeuronIsAPointInterval) {
  FeedforwardNet net = FeedforwardNet::Zeros({1, 1, 1});
  net.biases[0](0) = 0.7;
  const SectorBounds b = PropagateSectorBounds(net, testing::UnitBox(1));
  EXPECT_DOUBLE_EQ(b.preactivation_ranges[0][0].lo, 0.7);
  EXPECT_DOUBLE_EQ(b.preactivation_ranges[0][0].hi, 0.7);
  EXPECT_DOUBLE_EQ(b.per_layer[0].alpha, TanhSlope(0.7));
  EXPECT_DOUBLE_EQ(b.per_layer[0].beta, TanhSlope(0.7));
}

TEST(Propagate, SecondLayerContainsTanhOfFirst) {
  FeedforwardNet net = FeedforwardNet::Zeros({1, 1, 1, 1});
  net.weights[0](0, 0) = 1.0;
  net.weights[1](0, 0) = 1.0;
  net.weights[2](0, 0) = 1.0;
  const SectorBounds b = PropagateSectorBounds(net, testing::UnitBox(1, 0.1));
  const Interval& l1 = b.preactivation_ranges[0][0];
  const Interval& l2 = b.preactivation_ranges[1][0];
  EXPECT_LE(l2.lo, std::tanh(l1.lo));
  EXPECT_GE(l2.hi, std::tanh(l1.hi));
}

TEST(Propagate, PendulumFixture) {
  const ReferenceCase rc = PendulumReference();
  const SectorBounds b = PropagateSectorBounds(rc.model.net, rc.model.box);
  ASSERT_EQ(b.per_layer.size(), 1u);
  for (const auto& iv : b.preactivation_ranges[0]) {
    EXPECT_LT(iv.lo, 0.0);
    EXPECT_GT(iv.hi, 0.0);
  }
  EXPECT_DOUBLE_EQ(b.per_layer[0].beta, 1.0);
  // Interval propagation is looser than the printed 0.9978.
  EXPECT_LT(b.per_layer[0].alpha, 1.0);
  EXPECT_GT(b.per_layer[0].alpha, 0.98);
  RecordProperty("pendulum_alpha", std::to_string(b.per_layer[0].alpha));
}

TEST(Propagate, LayerScalarsEncloseNeuronBounds) {
  Rng rng(59);
  for (int c = 0; c < 100; ++c) {
    std::vector<int> dims = {rng.Int(1, 3)};
    const int k = rng.Int(1, 3);
    for (int i = 0; i < k; ++i) dims.push_back(rng.Int(1, 5));
    dims.push_back(dims[0]);
    const FeedforwardNet net = rng.Net(dims, 1.0);
    const SectorBounds b = PropagateSectorBounds(net, testing::UnitBox(dims[0]));
    for (const auto& layer : b.per_layer) {
      for (const auto& n : layer.per_neuron) {
        EXPECT_LE(layer.alpha, n.alpha);
        EXPECT_GE(layer.beta, n.beta);
        EXPECT_LE(n.alpha, n.beta);
      }
    }
  }
}

// Empirical incremental slopes of every neuron over random input pairs must
// lie inside the per-neuron bounds.
TEST(Propagate, SoundAgainstSampledSlopes) {
  Rng rng(61);
  for (int c = 0; c < 100; ++c) {
    std::vector<int> dims = {rng.Int(1, 3)};
    const int k = rng.Int(1, 2);
    for (int i = 0; i < k; ++i) dims.push_back(rng.Int(1, 4));
    dims.push_back(dims[0]);
    const FeedforwardNet net = rng.Net(dims, 1.2);
    Box box;
    for (int j = 0; j < dims[0]; ++j) {
      const double lo = rng.Uniform(-2, 1);
      box.emplace_back(lo, lo + rng.Uniform(0.1, 2));
    }
    const SectorBounds b = PropagateSectorBounds(net, box);
    for (int s = 0; s < 100000; ++s) {
      const Vec x1 = rng.InBox(box), x2 = rng.InBox(box);
      Vec w1 = x1, w2 = x2;
      for (int l = 0; l < k; ++l) {
        const Vec v1 = net.weights[l] * w1 + net.biases[l];
        const Vec v2 = net.weights[l] * w2 + net.biases[l];
        for (Eigen::Index i = 0; i < v1.size(); ++i) {
          const double dv = v1(i) - v2(i);
          if (std::abs(dv) < 1e-6) continue;
          const double slope = (std::tanh(v1(i)) - std::tanh(v2(i))) / dv;
          const SlopeBounds& nb = b.per_layer[l].per_neuron[i];
          ASSERT_GE(slope, nb.alpha - 1e-9) << "case " << c << " layer " << l;
          ASSERT_LE(slope, nb.beta + 1e-9) << "case " << c << " layer " << l;
        }
        w1 = v1.array().tanh().matrix();
        w2 = v2.array().tanh().matrix();
      }
    }
  }
}

// Stacked inputs [w^0; ..; w^{k-1}] and outputs [w^1; ..; w^k] for a pair of
// states; the quadratic form of the lemma matrix on their difference.
TEST(Lemma, QuadraticFormIsNonnegative) {
  Rng rng(67);
  for (int c = 0; c < 200; ++c) {
    std::vector<int> dims = {rng.Int(1, 3)};
    const int k = rng.Int(1, 3);
    for (int i = 0; i < k; ++i) dims.push_back(rng.Int(1, 4));
    dims.push_back(dims[0]);
    const FeedforwardNet net = rng.Net(dims, 1.0);
    const Box box = testing::UnitBox(dims[0], rng.Uniform(0.2, 2.0));
    const SectorBounds b = PropagateSectorBounds(net, box);
    const Mat lemma = LemmaMatrix(BuildQMatrices(net, b));
    const auto a1 = ForwardWithActivations(net, rng.InBox(box)).activations;
    const auto a2 = ForwardWithActivations(net, rng.InBox(box)).activations;
    std::vector<double> in, out;
    for (int i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < a1[i].size(); ++j) in.push_back(a1[i](j) - a2[i](j));
    for (int i = 1; i <= k; ++i)
      for (Eigen::Index j = 0; j < a1[i].size(); ++j) out.push_back(a1[i](j) - a2[i](j));
    Vec xi(in.size() + out.size());
    for (size_t i = 0; i < in.size(); ++i) xi(i) = in[i];
    for (size_t i = 0; i < out.size(); ++i) xi(in.size() + i) = out[i];
    ASSERT_EQ(xi.size(), lemma.rows());
    EXPECT_GE(xi.dot(lemma * xi), -1e-10) << "case " << c;
  }
}

TEST(QMatrices, SingleLayer) {
  Rng rng(71);
  const FeedforwardNet net = rng.Net({2, 3, 2}, 1.0);
  const SectorBounds b = PropagateSectorBounds(net, testing::UnitBox(2));
  const QPair q = BuildQMatrices(net, b);
  EXPECT_EQ(q.q1, b.per_layer[0].alpha * net.weights[0]);
  EXPECT_EQ(q.q2, b.per_layer[0].beta * net.weights[0]);
}

TEST(QMatrices, IdentityTwoLayer) {
  FeedforwardNet net = FeedforwardNet::Zeros({2, 2, 2, 2});
  net.weights[0] = net.weights[1] = net.weights[2] = Mat::Identity(2, 2);
  SectorBounds b;
  b.per_layer.resize(2);
  for (auto& l : b.per_layer) {
    l.alpha = l.beta = 1.0;
    l.per_neuron.assign(2, SlopeBounds{1.0, 1.0});
  }
  const QPair q = BuildQMatrices(net, b);
  EXPECT_EQ(q.q1, Mat(Mat::Identity(4, 4)));
  EXPECT_EQ(q.q2, Mat(Mat::Identity(4, 4)));
}

TEST(QMatrices, VehicleFixtureShape) {
  const ReferenceCase rc = VehicleReference();
  const SectorBounds b = PropagateSectorBounds(rc.model.net, rc.model.box);
  const QPair q = BuildQMatrices(rc.model.net, b);
  EXPECT_EQ(q.q1.rows(), 10);
  EXPECT_EQ(q.q1.cols(), 7);
  EXPECT_EQ(q.q2.rows(), 10);
  EXPECT_EQ(q.q2.cols(), 7);
  EXPECT_THROW(BuildQMatrices(rc.model.net, b, 2, 3), DimensionError);
}

}  // namespace
}  // namespace nodectl
