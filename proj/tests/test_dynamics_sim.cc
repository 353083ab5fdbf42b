#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "nodectl/dynamics_sim.h"
#include "nodectl/reference_fixtures.h"
#include "test_util.h"

namespace nodectl {
namespace {

using testing::Rng;

Vec V2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

double PendulumEnergy(const Vec& x) {
  return 0.5 * x(1) * x(1) + 1.962 * (1.0 - std::cos(x(0)));
}

ControllerSpec PrintedPendulumController(const ReferenceCase& rc) {
  ControllerSpec c;
  c.H = rc.H;
  c.W_umin = MinNormCancellation(rc.model.net.weights.back(), rc.g).w_umin;
  c.b_u = Vec::Zero(1);
  return c;
}

TEST(Pendulum, DriftExamples) {
  const Plant p = PendulumPlant();
  EXPECT_EQ(p.drift(V2(0, 0)), V2(0, 0));
  const Vec f = p.drift(V2(1, 0));
  EXPECT_EQ(f(0), 0.0);
  EXPECT_NEAR(f(1), -1.962 * std::sin(1.0), 1e-15);
  EXPECT_NEAR(f(1), -1.6510, 1e-4);
  EXPECT_NEAR(p.g(1, 0), 1.0 / (0.15 * 25.0), 1e-15);
  PendulumParams unit;
  unit.unit_actuation = true;
  EXPECT_EQ(PendulumPlant(unit).g, Mat(PendulumReference().g));
  PendulumParams bad;
  bad.mass = -1.0;
  EXPECT_THROW(PendulumPlant(bad), std::invalid_argument);
}

TEST(Pendulum, FrictionTerm) {
  PendulumParams fr;
  fr.friction = 0.3;
  EXPECT_NEAR(PendulumPlant(fr).drift(V2(0, 1))(1), -0.3 / 0.15, 1e-15);
}

TEST(Pendulum, EnergyConservedAlongRk4) {
  const Plant p = PendulumPlant();
  Rng rng(301);
  for (int c = 0; c < 100; ++c) {
    const Vec x0 = rng.InBox(p.box);
    const Trajectory t = Rk4Simulate(p.drift, x0, 10.0, 1e-2);
    const double e0 = PendulumEnergy(x0);
    double drift = 0.0;
    for (const Vec& x : t.states) drift = std::max(drift, std::abs(PendulumEnergy(x) - e0));
    EXPECT_LT(drift, 1e-6) << "case " << c;
  }
}

TEST(Vehicle, DriftExamples) {
  const Plant v = VehiclePlant();
  EXPECT_LT((v.drift(V2(0, 0)) - V2(0, -0.5)).norm(), 1e-15);
  EXPECT_LT((v.drift(V2(0, 1)) - V2(std::sin(1.0), -0.5 * std::cos(1.0))).norm(), 1e-15);
  EXPECT_THROW(v.drift(V2(2, 0)), std::domain_error);
  EXPECT_THROW(VehiclePlant(0.5, 1.0, {Interval(-1, 2.5), Interval(-1, 1)}),
               std::invalid_argument);
  EXPECT_EQ(v.g, Mat(VehicleReference().g));
}

TEST(Dataset, DeterministicAndExact) {
  const Plant p = PendulumPlant();
  const Dataset a = SampleDataset(p, 1, 42), b = SampleDataset(p, 1, 42);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a.states[0], b.states[0]);
  EXPECT_NE(SampleDataset(p, 1, 43).states[0], a.states[0]);
  const Dataset d = SampleDataset(VehiclePlant(), 500, 7);
  for (size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.derivatives[i], VehiclePlant().drift(d.states[i]));
    EXPECT_TRUE(InBox(d.box, d.states[i]));
  }
  EXPECT_THROW(SampleDataset(p, 0, 1), std::invalid_argument);
}

TEST(Dataset, MeanNearBoxCenter) {
  const Dataset d = SampleDataset(PendulumPlant(), 10000, 11);
  Vec mean = Vec::Zero(2);
  for (const Vec& x : d.states) mean += x;
  mean /= 10000.0;
  // Uniform on [-2, 2]: sigma of the mean = (4 / sqrt(12)) / 100.
  const double sigma = 4.0 / std::sqrt(12.0) / 100.0;
  EXPECT_LT(std::abs(mean(0)), 3 * sigma);
  EXPECT_LT(std::abs(mean(1)), 3 * sigma);
}

TEST(Dataset, GridCoversCorners) {
  const Dataset d = GridDataset(PendulumPlant(), 5);
  ASSERT_EQ(d.size(), 25u);
  bool lo = false, hi = false;
  for (const Vec& x : d.states) {
    lo |= x == V2(-2, -2);
    hi |= x == V2(2, 2);
  }
  EXPECT_TRUE(lo && hi);
  EXPECT_THROW(GridDataset(PendulumPlant(), 1), std::invalid_argument);
}

TEST(Rk4, ConstantAndExponential) {
  const Trajectory c = Rk4Simulate([](const Vec& x) { return Vec(Vec::Zero(x.size())); },
                                   V2(0.3, -0.2), 1.0, 0.1);
  for (const Vec& x : c.states) EXPECT_EQ(x, V2(0.3, -0.2));
  const Trajectory e = Rk4Simulate([](const Vec& x) { return Vec(-x); },
                                   Vec::Ones(1), 1.0, 1e-3);
  EXPECT_EQ(e.times.back(), 1.0);
  EXPECT_EQ(e.states.size(), 1001u);
  EXPECT_NEAR(e.states.back()(0), std::exp(-1.0), 1e-8);
}

TEST(Rk4, LastStepLandsOnEnd) {
  const Trajectory t = Rk4Simulate([](const Vec& x) { return Vec(-x); },
                                   Vec::Ones(1), 0.25, 0.1);
  ASSERT_EQ(t.times.size(), 4u);
  EXPECT_EQ(t.times.back(), 0.25);
  EXPECT_NEAR(t.states.back()(0), std::exp(-0.25), 1e-6);
  EXPECT_THROW(Rk4Simulate([](const Vec& x) { return x; }, Vec::Ones(1), 1.0, 0.0),
               std::invalid_argument);
}

TEST(Rk4, HarmonicOscillatorEnergy) {
  const Trajectory t = Rk4Simulate(
      [](const Vec& x) { return V2(x(1), -x(0)); }, V2(1, 0), 10.0, 1e-3);
  double worst = 0.0;
  for (const Vec& x : t.states) worst = std::max(worst, std::abs(x.squaredNorm() - 1.0));
  EXPECT_LE(worst, 1e-6);
}

TEST(Rk4, FourthOrderConvergence) {
  Rng rng(303);
  for (int c = 0; c < 100; ++c) {
    // Damped rotation with exact solution e^{-a t} R(w t) x0.
    const double a = rng.Uniform(0.0, 1.0), w = rng.Uniform(0.5, 3.0);
    const auto f = [a, w](const Vec& x) { return V2(-a * x(0) + w * x(1), -w * x(0) - a * x(1)); };
    const Vec x0 = V2(rng.Uniform(-1, 1), rng.Uniform(-1, 1)) + V2(1, 0);
    const double t = 2.0;
    Mat rot(2, 2);
    rot << std::cos(w * t), std::sin(w * t), -std::sin(w * t), std::cos(w * t);
    const Vec exact = std::exp(-a * t) * rot * x0;
    const double e1 = (Rk4Simulate(f, x0, t, 0.1).states.back() - exact).norm();
    const double e2 = (Rk4Simulate(f, x0, t, 0.05).states.back() - exact).norm();
    EXPECT_NEAR(e1 / e2, 16.0, 1.5) << "case " << c;
  }
}

TEST(Rk4, BoxExitFlaggedNotStopped) {
  const Trajectory t = Rk4Simulate([](const Vec& x) { return Vec(x); }, Vec::Ones(1), 1.0,
                                   0.01, {Interval(-2, 2)});
  EXPECT_TRUE(t.exited_box);
  EXPECT_GT(t.first_exit, 0);
  EXPECT_EQ(t.states.size(), 101u);
  EXPECT_EQ(t.valid_samples(), t.first_exit);
  EXPECT_GT(t.states[t.first_exit](0), 2.0);
  EXPECT_LE(t.states[t.first_exit - 1](0), 2.0);
}

TEST(Rk4, NonFiniteAborts) {
  try {
    Rk4Simulate([](const Vec& x) { return Vec(x.array().square()); }, Vec::Ones(1) * 10,
                5.0, 0.01);
    FAIL() << "expected abort";
  } catch (const SimulationAborted& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LT(e.time(), 5.0);
  }
}

TEST(ClosedLoop, ZeroControllerPendulumKeepsOrbit) {
  const ReferenceCase rc = PendulumReference();
  PendulumParams pp;
  pp.unit_actuation = true;
  const Plant p = PendulumPlant(pp);
  ControllerSpec zero;
  zero.H = Mat::Zero(1, 2);
  zero.W_umin = Mat::Zero(1, 5);
  zero.b_u = Vec::Zero(1);
  const Trajectory t = ClosedLoopSimulate(p, zero, rc.model.net, V2(1, 1), 30.0, 1e-3);
  ASSERT_EQ(t.inputs.size(), t.states.size());
  EXPECT_EQ(t.inputs.back()(0), 0.0);
  double late = 0.0;
  for (size_t k = t.states.size() / 2; k < t.states.size(); ++k) late = std::max(late, t.states[k].norm());
  EXPECT_GE(late, 0.9 * std::sqrt(2.0));
  const Trajectory u = ClosedLoopSimulate(p, zero, rc.model.net, V2(-1, -1), 30.0, 1e-3);
  EXPECT_FALSE(ContractionDecayTest({t, u}, 1.0, 0.05).pass);
}

TEST(ClosedLoop, PrintedPendulumControllerConverges) {
  const ReferenceCase rc = PendulumReference();
  PendulumParams pp;
  pp.unit_actuation = true;
  const Plant p = PendulumPlant(pp);
  const ControllerSpec c = PrintedPendulumController(rc);
  std::vector<Trajectory> trajs;
  for (const Vec& x0 : rc.initial_conditions) {
    trajs.push_back(ClosedLoopSimulate(p, c, rc.model.net, x0, 30.0, 1e-3));
  }
  ASSERT_EQ(trajs.size(), 4u);
  for (size_t i = 1; i < trajs.size(); ++i) {
    EXPECT_LT((trajs[i].states.back() - trajs[0].states.back()).norm(), 2 * rc.radius);
  }
  const Vec x_star = EquilibriumOracle(ClosedLoopField(p, c, rc.model.net), V2(0.1, 0.1));
  EXPECT_LT(x_star.norm(), 0.05);
  EXPECT_LE(ClosedLoopField(p, c, rc.model.net)(x_star).norm(), 1e-12);
  EXPECT_THROW(ClosedLoopField(p, c, FeedforwardNet::Zeros({2, 3, 2})), DimensionError);
}

TEST(Decay, Examples) {
  const auto f = [](const Vec& x) { return Vec(-x); };
  const Trajectory a = Rk4Simulate(f, V2(1, 0), 3.0, 1e-2);
  const Trajectory b = Rk4Simulate(f, V2(0, 1), 3.0, 1e-2);
  const DecayReport same = ContractionDecayTest({a, a}, 1.0, 5.0);
  EXPECT_TRUE(same.pass);
  const DecayReport lin = ContractionDecayTest({a, b}, 1.0, 1.0);
  EXPECT_TRUE(lin.pass);
  EXPECT_NEAR(lin.worst_ratio, 1.0, 1e-8);
  EXPECT_FALSE(ContractionDecayTest({a, b}, 1.0, 1.1).pass);
  const Trajectory shorter = Rk4Simulate(f, V2(0, 1), 2.0, 1e-2);
  EXPECT_THROW(ContractionDecayTest({a, shorter}, 1.0, 1.0), std::invalid_argument);
}

TEST(Decay, ExitedPairsVoided) {
  const auto f = [](const Vec& x) { return Vec(-x); };
  const Box box = testing::UnitBox(2);
  const Trajectory in = Rk4Simulate(f, V2(0.5, 0), 1.0, 1e-2, box);
  const Trajectory out = Rk4Simulate(f, V2(3, 0), 1.0, 1e-2, box);
  const DecayReport r = ContractionDecayTest({in, out}, 1.0, 100.0);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.pairs_voided, 1);
  EXPECT_EQ(r.pairs_checked, 0);
}

TEST(Equilibrium, Examples) {
  const Vec x = EquilibriumOracle([](const Vec& v) { return Vec(-v + Vec::Ones(v.size())); },
                                  Vec::Zero(2));
  EXPECT_LT((x - Vec::Ones(2)).norm(), 1e-12);
  EXPECT_THROW(EquilibriumOracle([](const Vec& v) { return Vec(v.array().square() + 1.0); },
                                 Vec::Zero(1), 0.0),
               std::runtime_error);
}

TEST(Envelope, Examples) {
  const auto f = [](const Vec& x) { return Vec(-x); };
  // From x*: only the radius term remains.
  const Trajectory at = Rk4Simulate(f, Vec::Zero(2), 2.0, 1e-2);
  const EnvelopeReport r0 = EnvelopeCheck(at, Vec::Zero(2), 1.0, 1.0, 2.0, 0.0);
  EXPECT_TRUE(r0.pass);
  EXPECT_EQ(r0.terminal_distance, 0.0);
  // epsilon = 0 gives the Def. 2 cone; xdot = -x decays at rate 1 = gamma / 2.
  const Trajectory t = Rk4Simulate(f, V2(0.6, -0.8), 2.0, 1e-2);
  const EnvelopeReport r1 = EnvelopeCheck(t, Vec::Zero(2), 1.0, 1.0, 2.0, 0.0);
  EXPECT_TRUE(r1.pass);
  EXPECT_NEAR(r1.worst_ratio, 1.0, 1e-8);
  EXPECT_FALSE(EnvelopeCheck(t, Vec::Zero(2), 1.0, 1.0, 2.2, 0.0).pass);
  EXPECT_EQ(r1.samples_checked, 201);
}

TEST(Csv, HeaderAndPrecision) {
  Trajectory t;
  t.times = {0.0, 0.1};
  t.states = {V2(1.0 / 3.0, 0), V2(0.5, -1)};
  t.inputs = {Vec::Constant(1, 2.0), Vec::Constant(1, 0.0)};
  std::ostringstream os;
  WriteTrajectoryCsv(os, t);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "t,x1,x2,u1");
  EXPECT_EQ(row, "0,0.33333333333333331,0,2");
  EXPECT_EQ(std::stod(row.substr(2)), 1.0 / 3.0);
}

}  // namespace
}  // namespace nodectl
