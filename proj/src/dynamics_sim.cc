#include "nodectl/dynamics_sim.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "nodectl/lmi_cert.h"

namespace nodectl {

Plant PendulumPlant(const PendulumParams& p) {
  if (!(p.mass > 0.0) || !(p.length > 0.0) || !(p.gravity > 0.0) ||
      p.friction < 0.0) {
    throw std::invalid_argument("PendulumPlant: invalid physical parameters");
  }
  if (p.box.size() != 2) throw DimensionError("PendulumPlant: box must be 2-D");
  Plant plant;
  plant.name = "pendulum";
  plant.state_dim = 2;
  const double gl = p.gravity / p.length;
  const double km = p.friction / p.mass;
  plant.drift = [gl, km](const Vec& x) {
    if (x.size() != 2) throw DimensionError("pendulum state must be 2-D");
    Vec dx(2);
    dx << x(1), -gl * std::sin(x(0)) - km * x(1);
    return dx;
  };
  plant.g = Mat::Zero(2, 1);
  plant.g(1, 0) =
      p.unit_actuation ? 1.0 : 1.0 / (p.mass * p.length * p.length);
  plant.box = p.box;
  return plant;
}

Plant VehiclePlant(double kappa, double nu, const Box& box) {
  if (box.size() != 2) throw DimensionError("VehiclePlant: box must be 2-D");
  const double worst = std::max(kappa * box[0].lo, kappa * box[0].hi);
  if (worst >= 1.0) {
    throw std::invalid_argument(
        "VehiclePlant: 1 - kappa d_e vanishes inside the box");
  }
  Plant plant;
  plant.name = "vehicle";
  plant.state_dim = 2;
  plant.drift = [kappa, nu](const Vec& x) {
    if (x.size() != 2) throw DimensionError("vehicle state must be 2-D");
    const double den = 1.0 - kappa * x(0);
    if (den <= 0.0) {
      throw std::domain_error("vehicle drift singular: 1 - kappa d_e <= 0");
    }
    Vec dx(2);
    dx << nu * std::sin(x(1)), -nu * kappa * std::cos(x(1)) / den;
    return dx;
  };
  plant.g = Mat::Zero(2, 1);
  plant.g(1, 0) = 1.0;
  plant.box = box;
  return plant;
}

Dataset SampleDataset(const Plant& plant, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("SampleDataset: n must be >= 1");
  std::mt19937_64 rng(seed);
  Dataset d;
  d.box = plant.box;
  for (int k = 0; k < n_samples; ++k) {
    Vec x(plant.state_dim);
    for (int i = 0; i < plant.state_dim; ++i) {
      std::uniform_real_distribution<double> u(plant.box[i].lo, plant.box[i].hi);
      x(i) = u(rng);
    }
    d.derivatives.push_back(plant.drift(x));
    d.states.push_back(std::move(x));
  }
  return d;
}

Dataset GridDataset(const Plant& plant, int points_per_axis) {
  if (points_per_axis < 2) {
    throw std::invalid_argument("GridDataset: need at least 2 points per axis");
  }
  Dataset d;
  d.box = plant.box;
  const int m = plant.state_dim;
  std::vector<int> idx(m, 0);
  while (true) {
    Vec x(m);
    for (int i = 0; i < m; ++i) {
      const double f = static_cast<double>(idx[i]) / (points_per_axis - 1);
      x(i) = plant.box[i].lo + f * (plant.box[i].hi - plant.box[i].lo);
    }
    d.derivatives.push_back(plant.drift(x));
    d.states.push_back(std::move(x));
    int i = 0;
    while (i < m && ++idx[i] == points_per_axis) idx[i++] = 0;
    if (i == m) break;
  }
  return d;
}

bool InBox(const Box& box, const Vec& x) {
  if (box.empty()) return true;
  for (size_t i = 0; i < box.size(); ++i) {
    if (!box[i].contains(x(static_cast<Eigen::Index>(i)))) return false;
  }
  return true;
}

Trajectory Rk4Simulate(const VectorField& f, const Vec& x0, double t_end,
                       double h, const Box& box) {
  if (!(h > 0.0) || !(t_end >= 0.0)) {
    throw std::invalid_argument("Rk4Simulate: need h > 0 and t_end >= 0");
  }
  if (!box.empty() && static_cast<Eigen::Index>(box.size()) != x0.size()) {
    throw DimensionError("Rk4Simulate: box dimension mismatch");
  }
  Trajectory tr;
  const long steps = static_cast<long>(std::ceil(t_end / h - 1e-9));
  tr.times.reserve(steps + 1);
  tr.states.reserve(steps + 1);
  Vec x = x0;
  auto record = [&](double t) {
    if (!x.allFinite()) {
      std::ostringstream os;
      os << "non-finite state at t = " << t;
      throw SimulationAborted(t, os.str());
    }
    if (!tr.exited_box && !InBox(box, x)) {
      tr.exited_box = true;
      tr.first_exit = static_cast<int>(tr.states.size());
    }
    tr.times.push_back(t);
    tr.states.push_back(x);
  };
  record(0.0);
  for (long n = 0; n < steps; ++n) {
    const double t = n * h;
    const double dt = std::min(h, t_end - t);
    const Vec k1 = f(x);
    const Vec k2 = f(x + 0.5 * dt * k1);
    const Vec k3 = f(x + 0.5 * dt * k2);
    const Vec k4 = f(x + dt * k3);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    record(n + 1 == steps ? t_end : (n + 1) * h);
  }
  return tr;
}

VectorField ClosedLoopField(const Plant& plant, const ControllerSpec& ctrl,
                            const FeedforwardNet& net) {
  if (ctrl.H.rows() != plant.g.cols() || ctrl.H.cols() != plant.state_dim ||
      ctrl.W_umin.rows() != plant.g.cols() ||
      ctrl.W_umin.cols() != net.dims[net.hidden_layers()]) {
    throw DimensionError("ClosedLoopField: controller does not fit the plant");
  }
  return [plant, ctrl, net](const Vec& x) {
    return Vec(plant.drift(x) + plant.g * ctrl.Evaluate(net, x));
  };
}

Trajectory ClosedLoopSimulate(const Plant& plant, const ControllerSpec& ctrl,
                              const FeedforwardNet& net, const Vec& x0,
                              double t_end, double h) {
  Trajectory tr =
      Rk4Simulate(ClosedLoopField(plant, ctrl, net), x0, t_end, h, plant.box);
  tr.inputs.reserve(tr.states.size());
  for (const Vec& x : tr.states) tr.inputs.push_back(ctrl.Evaluate(net, x));
  return tr;
}

DecayReport ContractionDecayTest(const std::vector<Trajectory>& trajectories,
                                 double c, double rate) {
  DecayReport rep;
  for (size_t i = 1; i < trajectories.size(); ++i) {
    if (trajectories[i].times != trajectories[0].times) {
      throw std::invalid_argument("ContractionDecayTest: time grids differ");
    }
  }
  for (size_t i = 0; i < trajectories.size(); ++i) {
    for (size_t j = i + 1; j < trajectories.size(); ++j) {
      const Trajectory& a = trajectories[i];
      const Trajectory& b = trajectories[j];
      const int n = std::min(a.valid_samples(), b.valid_samples());
      if (n == 0) {
        ++rep.pairs_voided;
        continue;
      }
      ++rep.pairs_checked;
      const double d0 = (a.states[0] - b.states[0]).norm();
      for (int k = 0; k < n; ++k) {
        const double d = (a.states[k] - b.states[k]).norm();
        const double bound = c * std::exp(-rate * a.times[k]) * d0;
        if (bound > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, d / bound);
        if (d > (1.0 + 1e-6) * bound + 1e-9) rep.pass = false;
        ++rep.samples_checked;
      }
    }
  }
  return rep;
}

Vec EquilibriumOracle(const VectorField& f, const Vec& seed,
                      double settle_time, double h) {
  Vec x = seed;
  if (settle_time > 0.0) x = Rk4Simulate(f, seed, settle_time, h).states.back();
  const Eigen::Index m = x.size();
  for (int it = 0; it < 100; ++it) {
    const Vec fx = f(x);
    if (fx.norm() <= 1e-12) return x;
    Mat jac(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double step = 1e-6 * std::max(1.0, std::abs(x(i)));
      Vec xp = x, xm = x;
      xp(i) += step;
      xm(i) -= step;
      jac.col(i) = (f(xp) - f(xm)) / (2.0 * step);
    }
    Vec dx = jac.fullPivLu().solve(-fx);
    // Damp until the residual decreases.
    double s = 1.0;
    while (s > 1e-8 && f(x + s * dx).norm() >= fx.norm()) s *= 0.5;
    if (s <= 1e-8) {
      if (fx.norm() <= 1e-12) return x;
      break;
    }
    x += s * dx;
  }
  if (f(x).norm() <= 1e-12) return x;
  std::ostringstream os;
  os << "EquilibriumOracle: no convergence, |f(x)| = " << f(x).norm();
  throw std::runtime_error(os.str());
}

EnvelopeReport EnvelopeCheck(const Trajectory& traj, const Vec& x_star,
                             double p_low, double p_up, double gamma,
                             double epsilon) {
  EnvelopeReport rep;
  if (traj.states.empty()) return rep;
  const double d0 = (traj.states[0] - x_star).norm();
  const int n = traj.valid_samples();
  for (int k = 0; k < n; ++k) {
    const double d = (traj.states[k] - x_star).norm();
    const double env = DeviationEnvelope(p_low, p_up, gamma, epsilon, d0,
                                         traj.times[k],
                                         EnvelopeMode::kToEquilibrium);
    if (env > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, d / env);
    if (d > (1.0 + 1e-6) * env + 1e-12) rep.pass = false;
    ++rep.samples_checked;
  }
  rep.terminal_distance = (traj.states.back() - x_star).norm();
  return rep;
}

EnvelopeReport EnvelopeCheck(const Trajectory& traj, const Vec& x_star,
                             const ControllerSpec& spec, double epsilon) {
  return EnvelopeCheck(traj, x_star, spec.s_low, spec.s_up, spec.gamma, epsilon);
}

void WriteTrajectoryCsv(std::ostream& os, const Trajectory& traj) {
  const Eigen::Index m = traj.states.empty() ? 0 : traj.states[0].size();
  const bool has_u = !traj.inputs.empty();
  const Eigen::Index l = has_u ? traj.inputs[0].size() : 0;
  os << "t";
  for (Eigen::Index i = 0; i < m; ++i) os << ",x" << i + 1;
  for (Eigen::Index i = 0; i < l; ++i) os << ",u" << i + 1;
  os << "\n";
  const auto old_flags = os.flags();
  const auto old_prec = os.precision();
  os << std::setprecision(17);
  for (size_t k = 0; k < traj.states.size(); ++k) {
    os << traj.times[k];
    for (Eigen::Index i = 0; i < m; ++i) os << "," << traj.states[k](i);
    for (Eigen::Index i = 0; i < l; ++i) os << "," << traj.inputs[k](i);
    os << "\n";
  }
  os.flags(old_flags);
  os.precision(old_prec);
}

}  // namespace nodectl
