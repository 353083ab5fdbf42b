#pragma once

// Ground-truth plants xdot = f(x) + g u, sampling, fixed-step RK4 and the
// empirical checks (pairwise decay, convergence envelope) run against them.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nodectl/interval.h"
#include "nodectl/nn_model.h"
#include "nodectl/numerics.h"
#include "nodectl/synthesis.h"

namespace nodectl {

using VectorField = std::function<Vec(const Vec&)>;

struct Plant {
  std::string name;
  int state_dim = 0;
  VectorField drift;
  Mat g;
  Box box;
};

struct PendulumParams {
  double mass = 0.15;
  double length = 5.0;
  double friction = 0.0;
  double gravity = 9.81;
  /// g = [0; 1] instead of the physical [0; 1/(m l^2)].
  bool unit_actuation = false;
  Box box = {Interval(-2.0, 2.0), Interval(-2.0, 2.0)};
};

/// x1' = x2,  x2' = -(g/l) sin x1 - (k/m) x2 + u/(m l^2).
Plant PendulumPlant(const PendulumParams& params = {});

/// State (d_e, theta_e):  d_e' = nu sin theta_e,
/// theta_e' = omega - nu kappa cos theta_e / (1 - kappa d_e).
/// Throws std::invalid_argument if 1 - kappa d_e vanishes on the box; the
/// drift throws std::domain_error at a singular state.
Plant VehiclePlant(double kappa = 0.5, double nu = 1.0,
                   const Box& box = {Interval(-1.0, 1.0), Interval(-1.0, 1.0)});

/// Uniform states in the box, exact derivatives (u = 0).
Dataset SampleDataset(const Plant& plant, int n_samples, std::uint64_t seed);

/// Dense grid (points per axis) over the box with exact derivatives.
Dataset GridDataset(const Plant& plant, int points_per_axis);

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> inputs;  // empty for open-loop runs
  bool exited_box = false;
  /// First sample outside the box, or -1.
  int first_exit = -1;

  /// Samples before the first box exit.
  int valid_samples() const {
    return first_exit < 0 ? static_cast<int>(states.size()) : first_exit;
  }
};

/// Thrown when the state becomes non-finite.
class SimulationAborted : public std::runtime_error {
 public:
  SimulationAborted(double t, const std::string& msg)
      : std::runtime_error(msg), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

bool InBox(const Box& box, const Vec& x);

/// Classical RK4 with step h up to t_end (last step shortened to land on
/// t_end exactly). A nonempty box only flags exits.
Trajectory Rk4Simulate(const VectorField& f, const Vec& x0, double t_end,
                       double h, const Box& box = {});

/// True plant under u = H x + W_umin w^k(x) + b_u.
VectorField ClosedLoopField(const Plant& plant, const ControllerSpec& ctrl,
                            const FeedforwardNet& net);
Trajectory ClosedLoopSimulate(const Plant& plant, const ControllerSpec& ctrl,
                              const FeedforwardNet& net, const Vec& x0,
                              double t_end, double h);

struct DecayReport {
  bool pass = true;
  /// max of dist(t) / (c e^{-rate t} d0) over checked samples.
  double worst_ratio = 0.0;
  int pairs_checked = 0;
  int samples_checked = 0;
  int pairs_voided = 0;  // pairs with a box exit at t = 0
};

/// Pairwise check of |x_i(t) - x_j(t)| <= (1+1e-6) c e^{-rate t} |x_i(0)-x_j(0)|
/// + 1e-9 while both trajectories are inside the box.
DecayReport ContractionDecayTest(const std::vector<Trajectory>& trajectories,
                                 double c, double rate);

/// Long simulation from the seed, then Newton with a central-difference
/// Jacobian until |f(x*)| <= 1e-12. Throws std::runtime_error after 100
/// Newton iterations without convergence.
Vec EquilibriumOracle(const VectorField& f, const Vec& seed,
                      double settle_time = 60.0, double h = 1e-2);

struct EnvelopeReport {
  bool pass = true;
  double worst_ratio = 0.0;  // max |x(t)-x*| / envelope(t)
  double terminal_distance = 0.0;
  int samples_checked = 0;
};

/// |x(t) - x*| against the to-equilibrium envelope of (s_low, s_up, gamma,
/// epsilon), relative tolerance 1e-6, while inside the box.
EnvelopeReport EnvelopeCheck(const Trajectory& traj, const Vec& x_star,
                             double p_low, double p_up, double gamma,
                             double epsilon);
EnvelopeReport EnvelopeCheck(const Trajectory& traj, const Vec& x_star,
                             const ControllerSpec& spec, double epsilon);

/// Header t,x1..xm[,u1..ul]; 17 significant digits.
void WriteTrajectoryCsv(std::ostream& os, const Trajectory& traj);

}  // namespace nodectl
