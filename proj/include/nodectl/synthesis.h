#pragma once

// Controller u(x) = H x + W_umin w^k(x) + b_u for  xdot = A x + Z(x) + g u.
// W_umin cancels the actuated part of the output layer; H comes from a convex
// LMI in (S, Y, mu) with H = Y S^{-1}.

#include <optional>
#include <string>
#include <vector>

#include "nodectl/lmi_cert.h"
#include "nodectl/lmi_solver.h"
#include "nodectl/nn_model.h"
#include "nodectl/numerics.h"
#include "nodectl/sector.h"

namespace nodectl {

struct Cancellation {
  Mat w_umin;  // -g^+ W_out
  Mat w_min;   // (I - g g^+) W_out
};

Cancellation MinNormCancellation(const Mat& w_out, const Mat& g);

struct SweepPoint {
  double s_low = 0.0;
  double kappa = 0.0;  // cap on s_up / s_low
  std::string status;
  double mu = 0.0;
  double s_min = 0.0;  // lambda_min(S)
  double s_max = 0.0;  // lambda_max(S)
  double objective = 0.0;  // mu / s_low * sqrt(s_max / s_low)
  double max_residual = 0.0;
  std::string message;
};

struct ControllerSpec {
  Mat H;
  Mat W_umin;
  Vec b_u;
  double gamma = 0.0;
  double radius = 0.0;
  Mat S;
  Mat Y;
  double mu = 0.0;
  double s_low = 0.0;
  double s_up = 0.0;
  std::string form;
  std::vector<SweepPoint> sweep_log;

  /// H x + W_umin w^k(x) + b_u.
  Vec Evaluate(const FeedforwardNet& net, const Vec& x) const;
};

/// Non-convex closed-loop condition at (P, gamma, H): the contraction form
/// with A -> A + gH and W^{k+1} -> W_min.
Mat AssembleCtrlNonconvex(const NodeModel& model, const Mat& g,
                          const SectorBounds& bounds, const Mat& p,
                          double gamma, const Mat& h);

enum class CtrlForm { kAuto, kSingleLayer, kTwoLayerReduced, kGeneral };
const char* ToString(CtrlForm form);
/// kAuto resolves to kSingleLayer (k = 1), kTwoLayerReduced (k = 2) or
/// kGeneral (k >= 3). Throws when the explicit form does not fit k.
CtrlForm ResolveForm(CtrlForm form, int hidden_layers);

/// Constants of the single-layer convex form.
struct SingleLayerCoefficients {
  double quadratic = 0.0;  // 2 alpha beta / (beta - alpha)^2
  double linear = 0.0;     // (alpha + beta) / (beta - alpha)
  double width = 0.0;      // beta - alpha, clamped below at kMinSectorWidth
  bool clamped = false;
};
SingleLayerCoefficients SingleLayerCoefficientsFor(double alpha, double beta);

/// lambda_min(Q1^1^T Q2^1) for the first hidden layer.
double FirstLayerLambdaMin(const FeedforwardNet& net, const SectorBounds& bounds);

/// Convex controller block at (S, Y, mu) for a fixed s_low.
Mat CtrlConvexMatrix(const NodeModel& model, const Mat& g,
                     const SectorBounds& bounds, const Mat& s, const Mat& y,
                     double mu, double s_low, CtrlForm form = CtrlForm::kAuto);

struct CtrlConvexOptions {
  double s_low = 1.0;
  /// S <= s_up_cap I when set.
  std::optional<double> s_up_cap;
  /// |Y| <= gain_bound * s_low (spectral norm), which keeps |H| <= gain_bound.
  std::optional<double> gain_bound;
  /// mu <= mu_cap when set.
  std::optional<double> mu_cap;
  /// Minimize a bound t >= |Y| instead of mu (adds scalar variable "t").
  bool minimize_gain = false;
  CtrlForm form = CtrlForm::kAuto;
};

/// Problem over S (symmetric), Y (l x m) and mu, minimizing mu. Constraint
/// names: "contraction", "s_low" and, when requested, "s_up", "gain",
/// "mu_cap", "gain_objective".
LmiProblem AssembleCtrlConvex(const NodeModel& model, const Mat& g,
                              const SectorBounds& bounds,
                              const CtrlConvexOptions& options);

double NeighborhoodRadius(double epsilon, double mu, double s_low, double s_up);

/// log-spaced grid, `per_decade` points per decade, endpoints included.
std::vector<double> LogGrid(double lo, double hi, int per_decade);
std::vector<double> LogGridCount(double lo, double hi, int count);

struct SynthesisOptions {
  std::vector<double> s_low_grid = LogGrid(1e-2, 1e2, 10);
  double kappa_max = 1e3;
  /// Condition caps swept per s_low; values above kappa_max are dropped.
  std::vector<double> kappa_grid = LogGridCount(1.5, 1e3, 13);
  /// Bound on |H| imposed at every sweep point; the min-mu problem has no
  /// minimizer in Y without it.
  double gain_bound = 1e3;
  /// Relative slack on mu for the second solve, which minimizes |Y| at the
  /// chosen sweep point. Negative disables it.
  double gain_refine_slack = 1e-3;
  CtrlForm form = CtrlForm::kAuto;
  SolverOptions solver;
  double verify_tol = 1e-8;
};

enum class SynthesisStatus { kOk, kInfeasible, kVerificationFailed };
const char* ToString(SynthesisStatus status);

struct SynthesisResult {
  SynthesisStatus status = SynthesisStatus::kInfeasible;
  std::optional<ControllerSpec> spec;
  std::vector<SweepPoint> sweep_log;
  double plugin_lambda_max = 0.0;
  std::string message;
};

/// Sweeps (s_low, kappa), minimizes mu at each point and keeps the smallest
/// mu/s_low*sqrt(s_up/s_low) (ties: smaller mu, then smaller kappa). The
/// chosen point is checked in the non-convex form at P = S^{-1}.
SynthesisResult Synthesize(const NodeModel& model, const Mat& g,
                           const SectorBounds& bounds,
                           const SynthesisOptions& options = {});

enum class BiasMode { kZero, kShiftToOrigin, kCustom };

struct BiasChoice {
  Vec b_u;
  /// |closed-loop constant at x = 0| left after the choice (shift mode).
  double residual = 0.0;
  bool exact = true;
};

/// kShiftToOrigin: least-squares b_u making b^{k+1} + W_min w^k(0) + g b_u
/// vanish (k = 1 only). kCustom passes `custom` through.
BiasChoice SelectBias(const FeedforwardNet& net, const Mat& g, BiasMode mode,
                      const Vec& custom = Vec());

}  // namespace nodectl
