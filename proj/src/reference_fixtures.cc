#include "nodectl/reference_fixtures.h"

namespace nodectl {

namespace {

Mat Rows(int r, int c, std::initializer_list<double> v) {
  Mat m(r, c);
  auto it = v.begin();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = *it++;
  }
  return m;
}

Vec Values(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vec Point(double a, double b) { return Values({a, b}); }

}  // namespace

ReferenceCase PendulumReference() {
  ReferenceCase rc;
  rc.name = "pendulum";
  NodeModel& m = rc.model;
  m.A = Rows(2, 2, {-0.0000, 0.9996,
                    -1.7654, 0.0012});
  m.net.dims = {2, 5, 2};
  // Printed as a 2x5 matrix and transposed.
  m.net.weights.push_back(Rows(2, 5, {-0.0365, -0.0220, -0.0061, -0.0180, 0.0169,
                                      0.0100, 0.0123, 0.0010, -0.0063, 0.0167})
                              .transpose());
  m.net.weights.push_back(Rows(2, 5, {0.0000, 0.0120, -0.0029, -0.0054, 0.0101,
                                      0.0351, 0.0267, 0.0051, 0.0134, -0.0181}));
  m.net.biases.push_back(
      Values({-0.4525, -0.0774, -0.1071, -0.3386, 0.1009}) * 1e-3);
  m.net.biases.push_back(Values({-0.0000, 0.0016}));
  m.epsilon = 0.002302;
  m.box = {Interval(-2.0, 2.0), Interval(-2.0, 2.0)};
  rc.g = Rows(2, 1, {0.0, 1.0});
  rc.S = Rows(2, 2, {0.4807, -0.2379,
                     -0.2379, 1.0928});
  rc.Y = Rows(1, 2, {1.3799, -5.7854});
  rc.H = Rows(1, 2, {0.2808, -5.2330});
  rc.mu = 0.61168;
  rc.radius = 0.0239;
  rc.printed_alpha = {0.9978};
  rc.initial_conditions = {Point(1, 1), Point(-1, -1), Point(-1.5, 1.5),
                           Point(1.5, -1.5)};
  return rc;
}

ReferenceCase VehicleReference() {
  ReferenceCase rc;
  rc.name = "vehicle";
  NodeModel& m = rc.model;
  m.A = Rows(2, 2, {-0.0011, 0.9023,
                    -0.2454, -0.0031});
  m.net.dims = {2, 5, 5, 2};
  m.net.weights.push_back(Rows(2, 5, {0.0002, -0.0100, -0.0005, 0.0040, -0.0114,
                                      0.0122, 0.0122, -0.0009, 0.0062, -0.0124})
                              .transpose());
  m.net.weights.push_back(Rows(5, 5, {0.0057, 0.0002, -0.0091, 0.0008, -0.0066,
                                      -0.0011, 0.0046, -0.0092, 0.0105, -0.0109,
                                      0.0163, 0.0147, 0.0107, -0.0015, -0.0066,
                                      -0.0096, 0.0111, -0.0014, 0.0031, -0.0076,
                                      0.0201, -0.0088, -0.0045, -0.0231, -0.0043}));
  m.net.weights.push_back(Rows(2, 5, {-0.0048, 0.0146, 0.0179, 0.0011, 0.0025,
                                      0.0072, -0.0170, 0.0142, 0.0174, -0.0113}));
  m.net.biases.push_back(
      Values({0.0447, -0.1820, -0.1153, -0.0527, 0.0181}) * 1e-3);
  m.net.biases.push_back(Values({-0.0031, 0.0073, -0.0061, -0.0075, 0.0049}));
  m.net.biases.push_back(Values({0.0013, -0.4621}));
  m.epsilon = 0.008532;
  m.box = {Interval(-1.0, 1.0), Interval(-1.0, 1.0)};
  rc.g = Rows(2, 1, {0.0, 1.0});
  rc.S = Rows(2, 2, {1.9914, -0.7703,
                     -0.7703, 12.1027});
  rc.Y = Rows(1, 2, {-2.6214, -18.6585});
  rc.H = Rows(1, 2, {-1.9610, -1.6665});
  rc.mu = 8.0543e-15;
  rc.radius = 3.5567e-16;
  rc.printed_alpha = {0.9994, 0.9999};
  rc.initial_conditions = {Point(0.8, 0.8), Point(-0.8, -0.8), Point(-0.5, 0.5),
                           Point(0.5, -0.5)};
  return rc;
}

}  // namespace nodectl
