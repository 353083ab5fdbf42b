#pragma once

// Small dense semidefinite programs:
//
//   minimize   c(x)                       (linear, optional)
//   subject to M_j(x) <= 0   for all j    (affine, symmetric-matrix valued)
//
// over named symmetric-matrix, rectangular-matrix and scalar variables.
// Constraints are supplied as callables; the solver recovers their affine
// coefficients by evaluating them at the coordinate basis, so problem
// builders can write the matrices with ordinary expressions.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nodectl/numerics.h"

namespace nodectl {

enum class VariableKind { kSymmetric, kRectangular, kScalar };

struct VariableDecl {
  std::string name;
  VariableKind kind = VariableKind::kScalar;
  int rows = 1;
  int cols = 1;
  // Entrywise box, enforced as 1x1 constraints.
  std::optional<double> lower;
  std::optional<double> upper;

  int coordinate_count() const;
};

/// Values of the decision variables by name.
class Assignment {
 public:
  void Set(const std::string& name, Mat value);
  void SetScalar(const std::string& name, double value);
  const Mat& Get(const std::string& name) const;
  double Scalar(const std::string& name) const;
  bool Has(const std::string& name) const { return values_.count(name) > 0; }
  const std::map<std::string, Mat>& values() const { return values_; }

 private:
  std::map<std::string, Mat> values_;
};

using AffineMatrixFn = std::function<Mat(const Assignment&)>;
using LinearFn = std::function<double(const Assignment&)>;

struct LmiConstraint {
  std::string name;
  AffineMatrixFn map;  // required: map(x) <= 0
};

class LmiProblem {
 public:
  void AddVariable(VariableDecl decl);
  void AddSymmetric(const std::string& name, int n);
  void AddRectangular(const std::string& name, int rows, int cols);
  void AddScalar(const std::string& name, std::optional<double> lower = {},
                 std::optional<double> upper = {});

  /// Adds the constraint map(x) <= 0.
  void AddConstraint(std::string name, AffineMatrixFn map);
  /// Linear functional to minimize. Without one the problem is a pure
  /// feasibility problem.
  void SetObjective(LinearFn objective) { objective_ = std::move(objective); }

  const std::vector<VariableDecl>& variables() const { return variables_; }
  const std::vector<LmiConstraint>& constraints() const { return constraints_; }
  const std::optional<LinearFn>& objective() const { return objective_; }
  const VariableDecl& variable(const std::string& name) const;

  int coordinate_count() const;
  Assignment FromCoordinates(const Vec& x) const;
  Vec ToCoordinates(const Assignment& a) const;
  /// Assignment with every variable set to zero.
  Assignment ZeroAssignment() const;

 private:
  std::vector<VariableDecl> variables_;
  std::vector<LmiConstraint> constraints_;
  std::optional<LinearFn> objective_;
};

enum class LmiStatus { kFeasible, kInfeasible, kNumericalFailure };

const char* ToString(LmiStatus status);

struct SolverOptions {
  /// Returned points satisfy lambda_max(M_j) <= -margin.
  double margin = 1e-9;
  /// Stop centering when the Newton decrement squared / 2 drops below this.
  double newton_tolerance = 1e-10;
  double barrier_growth = 10.0;
  /// Relative duality-gap bound at which the objective is accepted.
  double gap_tolerance = 1e-9;
  /// Every coordinate is kept inside [-bound, bound].
  double coordinate_bound = 1e6;
  int max_newton_steps = 500;
  int max_outer_iterations = 80;
};

struct LmiSolution {
  LmiStatus status = LmiStatus::kNumericalFailure;
  Assignment assignment;
  /// Largest lambda_max over the problem's own constraints (unscaled).
  double max_residual = 0.0;
  double objective_value = 0.0;
  std::vector<double> residuals;  // per constraint, declaration order
  /// Phase-one optimum of min t s.t. M_j(x) + margin I <= t I (scaled). Only
  /// meaningful when status is kInfeasible.
  double infeasibility = 0.0;
  int newton_steps = 0;
  std::string message;
};

LmiSolution Solve(const LmiProblem& problem, const SolverOptions& options = {});

struct ConstraintCheck {
  std::string name;
  double lambda_max = 0.0;
  bool pass = false;
};

struct CheckReport {
  std::vector<ConstraintCheck> constraints;
  double max_lambda = 0.0;
  bool pass = false;
};

/// Independent plug-in check: evaluates every constraint (and variable box)
/// at `assignment` and compares lambda_max against tol. Throws
/// std::invalid_argument when a variable is missing.
CheckReport CheckSolution(const LmiProblem& problem,
                          const Assignment& assignment, double tol);

/// Affine expansion M(x) = F0 + sum_i x_i F_i of one constraint.
struct AffineExpansion {
  Mat constant;
  std::vector<std::pair<int, Mat>> terms;  // (coordinate, F_i), nonzero only
};

/// Recovers the affine expansion of `map`; throws std::invalid_argument if
/// the map is not affine, square, or symmetric.
AffineExpansion ExpandConstraint(const LmiProblem& problem,
                                 const LmiConstraint& constraint);

}  // namespace nodectl
