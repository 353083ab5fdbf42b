#include "nodectl/lmi_solver.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace nodectl {

int VariableDecl::coordinate_count() const {
  switch (kind) {
    case VariableKind::kSymmetric:
      return rows * (rows + 1) / 2;
    case VariableKind::kRectangular:
      return rows * cols;
    case VariableKind::kScalar:
      return 1;
  }
  return 0;
}

void Assignment::Set(const std::string& name, Mat value) {
  values_[name] = std::move(value);
}

void Assignment::SetScalar(const std::string& name, double value) {
  values_[name] = Mat::Constant(1, 1, value);
}

const Mat& Assignment::Get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw std::invalid_argument("Assignment: missing variable '" + name + "'");
  }
  return it->second;
}

double Assignment::Scalar(const std::string& name) const {
  const Mat& m = Get(name);
  if (m.size() != 1) {
    throw DimensionError("Assignment: '" + name + "' is not a scalar");
  }
  return m(0, 0);
}

void LmiProblem::AddVariable(VariableDecl decl) {
  for (const auto& v : variables_) {
    if (v.name == decl.name) {
      throw std::invalid_argument("LmiProblem: duplicate variable '" +
                                  decl.name + "'");
    }
  }
  if (decl.kind == VariableKind::kScalar) decl.rows = decl.cols = 1;
  if (decl.kind == VariableKind::kSymmetric) decl.cols = decl.rows;
  if (decl.rows < 1 || decl.cols < 1) {
    throw DimensionError("LmiProblem: variable '" + decl.name +
                         "' has an empty shape");
  }
  variables_.push_back(std::move(decl));
}

void LmiProblem::AddSymmetric(const std::string& name, int n) {
  AddVariable({name, VariableKind::kSymmetric, n, n, {}, {}});
}

void LmiProblem::AddRectangular(const std::string& name, int rows, int cols) {
  AddVariable({name, VariableKind::kRectangular, rows, cols, {}, {}});
}

void LmiProblem::AddScalar(const std::string& name, std::optional<double> lower,
                           std::optional<double> upper) {
  AddVariable({name, VariableKind::kScalar, 1, 1, lower, upper});
}

void LmiProblem::AddConstraint(std::string name, AffineMatrixFn map) {
  constraints_.push_back({std::move(name), std::move(map)});
}

const VariableDecl& LmiProblem::variable(const std::string& name) const {
  for (const auto& v : variables_) {
    if (v.name == name) return v;
  }
  throw std::invalid_argument("LmiProblem: unknown variable '" + name + "'");
}

int LmiProblem::coordinate_count() const {
  int n = 0;
  for (const auto& v : variables_) n += v.coordinate_count();
  return n;
}

Assignment LmiProblem::FromCoordinates(const Vec& x) const {
  if (x.size() != coordinate_count()) {
    throw DimensionError("FromCoordinates: coordinate count mismatch");
  }
  Assignment a;
  Eigen::Index k = 0;
  for (const auto& v : variables_) {
    Mat m(v.rows, v.cols);
    if (v.kind == VariableKind::kSymmetric) {
      for (int j = 0; j < v.rows; ++j) {
        for (int i = 0; i <= j; ++i) {
          m(i, j) = m(j, i) = x(k++);
        }
      }
    } else {
      for (int j = 0; j < v.cols; ++j) {
        for (int i = 0; i < v.rows; ++i) m(i, j) = x(k++);
      }
    }
    a.Set(v.name, std::move(m));
  }
  return a;
}

Vec LmiProblem::ToCoordinates(const Assignment& a) const {
  Vec x(coordinate_count());
  Eigen::Index k = 0;
  for (const auto& v : variables_) {
    const Mat& m = a.Get(v.name);
    if (m.rows() != v.rows || m.cols() != v.cols) {
      throw DimensionError("ToCoordinates: shape mismatch for '" + v.name + "'");
    }
    if (v.kind == VariableKind::kSymmetric) {
      for (int j = 0; j < v.rows; ++j) {
        for (int i = 0; i <= j; ++i) x(k++) = 0.5 * (m(i, j) + m(j, i));
      }
    } else {
      for (int j = 0; j < v.cols; ++j) {
        for (int i = 0; i < v.rows; ++i) x(k++) = m(i, j);
      }
    }
  }
  return x;
}

Assignment LmiProblem::ZeroAssignment() const {
  return FromCoordinates(Vec::Zero(coordinate_count()));
}

const char* ToString(LmiStatus status) {
  switch (status) {
    case LmiStatus::kFeasible:
      return "feasible";
    case LmiStatus::kInfeasible:
      return "infeasible";
    case LmiStatus::kNumericalFailure:
      return "numerical-failure";
  }
  return "unknown";
}

AffineExpansion ExpandConstraint(const LmiProblem& problem,
                                 const LmiConstraint& constraint) {
  const int n = problem.coordinate_count();
  auto eval = [&](const Vec& x) {
    Mat m = constraint.map(problem.FromCoordinates(x));
    if (m.rows() != m.cols() || m.size() == 0) {
      throw std::invalid_argument("constraint '" + constraint.name +
                                  "' is not a square matrix");
    }
    if (!m.allFinite()) {
      throw std::invalid_argument("constraint '" + constraint.name +
                                  "' evaluated to a non-finite matrix");
    }
    return m;
  };
  AffineExpansion out;
  out.constant = eval(Vec::Zero(n));
  const Eigen::Index size = out.constant.rows();
  double scale = out.constant.cwiseAbs().maxCoeff();
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e(i) = 1.0;
    Mat f = eval(e);
    if (f.rows() != size) {
      throw std::invalid_argument("constraint '" + constraint.name +
                                  "' changes size with the variables");
    }
    f -= out.constant;
    if (f.cwiseAbs().maxCoeff() > 0.0) {
      scale = std::max(scale, f.cwiseAbs().maxCoeff());
      out.terms.emplace_back(i, std::move(f));
    }
  }
  // Affinity and symmetry checks at a fixed pseudo-random point.
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vec probe(n);
  for (int i = 0; i < n; ++i) probe(i) = dist(rng);
  Mat predicted = out.constant;
  for (const auto& [i, f] : out.terms) predicted += probe(i) * f;
  const Mat actual = eval(probe);
  const double tol = 1e-9 * std::max(1.0, scale) * std::max(1.0, double(n));
  if ((actual - predicted).cwiseAbs().maxCoeff() > tol) {
    throw std::invalid_argument("constraint '" + constraint.name +
                                "' is not affine in the variables");
  }
  auto symmetric_or_throw = [&](Mat& m) {
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) {
      throw std::invalid_argument("constraint '" + constraint.name +
                                  "' is not symmetric");
    }
    m = Symmetrize(m);
  };
  symmetric_or_throw(out.constant);
  for (auto& term : out.terms) symmetric_or_throw(term.second);
  return out;
}

namespace {

// One barrier block: G(z) = base + sum_a z_a D_a must stay positive definite.
struct BarrierBlock {
  Mat base;
  std::vector<std::pair<int, Mat>> d;
};

class Barrier {
 public:
  explicit Barrier(int dim) : dim_(dim) {}

  void Add(BarrierBlock block) {
    parameter_ += static_cast<double>(block.base.rows());
    blocks_.push_back(std::move(block));
  }

  int dim() const { return dim_; }
  double parameter() const { return parameter_; }

  // -sum log det G_j(z), or nullopt outside the domain.
  std::optional<double> Value(const Vec& z) const {
    double v = 0.0;
    for (const auto& b : blocks_) {
      Eigen::LLT<Mat> llt(Assemble(b, z));
      if (llt.info() != Eigen::Success) return std::nullopt;
      const Vec diag = Mat(llt.matrixL()).diagonal();
      if ((diag.array() <= 0.0).any() || !diag.allFinite()) return std::nullopt;
      v -= 2.0 * diag.array().log().sum();
    }
    return v;
  }

  bool Derivatives(const Vec& z, double& value, Vec& grad, Mat& hess) const {
    value = 0.0;
    grad = Vec::Zero(dim_);
    hess = Mat::Zero(dim_, dim_);
    for (const auto& b : blocks_) {
      Eigen::LLT<Mat> llt(Assemble(b, z));
      if (llt.info() != Eigen::Success) return false;
      const Mat l = llt.matrixL();
      const Vec diag = l.diagonal();
      if ((diag.array() <= 0.0).any() || !diag.allFinite()) return false;
      value -= 2.0 * diag.array().log().sum();
      // B_a = L^{-1} D_a L^{-T}; grad_a = -tr(B_a); hess_ab = <B_a, B_b>.
      std::vector<Mat> scaled;
      scaled.reserve(b.d.size());
      for (const auto& [a, d] : b.d) {
        Mat t = llt.matrixL().solve(d);
        Mat s = llt.matrixL().solve(t.transpose());
        scaled.push_back(std::move(s));
        grad(a) -= scaled.back().trace();
      }
      for (size_t p = 0; p < b.d.size(); ++p) {
        for (size_t q = 0; q <= p; ++q) {
          const double h = scaled[p].cwiseProduct(scaled[q]).sum();
          hess(b.d[p].first, b.d[q].first) += h;
          if (p != q) hess(b.d[q].first, b.d[p].first) += h;
        }
      }
    }
    return true;
  }

 private:
  static Mat Assemble(const BarrierBlock& b, const Vec& z) {
    Mat g = b.base;
    for (const auto& [a, d] : b.d) g.noalias() += z(a) * d;
    return g;
  }

  int dim_;
  double parameter_ = 0.0;
  std::vector<BarrierBlock> blocks_;
};

enum class CenterOutcome { kConverged, kStopped, kFailed };

// Minimizes tau * c^T z + phi(z) from a strictly feasible z by damped Newton.
// `stop` is checked after each accepted step and ends the centering early.
CenterOutcome Center(const Barrier& barrier, const Vec& c, double tau, Vec& z,
                     const SolverOptions& options, int& steps,
                     const std::function<bool(const Vec&)>& stop) {
  for (int it = 0; it < options.max_newton_steps; ++it) {
    double phi = 0.0;
    Vec grad;
    Mat hess;
    if (!barrier.Derivatives(z, phi, grad, hess)) return CenterOutcome::kFailed;
    const double f0 = tau * c.dot(z) + phi;
    grad += tau * c;
    Eigen::LDLT<Mat> ldlt(hess);
    if (ldlt.info() != Eigen::Success) return CenterOutcome::kFailed;
    Vec dz = -ldlt.solve(grad);
    if (!dz.allFinite()) return CenterOutcome::kFailed;
    const double decrement2 = -grad.dot(dz);
    if (decrement2 < 0.0) {
      // Ill-conditioned Hessians late on the path give tiny negatives.
      if (-0.5 * decrement2 > options.newton_tolerance) return CenterOutcome::kFailed;
      return CenterOutcome::kConverged;
    }
    if (0.5 * decrement2 <= options.newton_tolerance) {
      return CenterOutcome::kConverged;
    }
    double s = 1.0;
    bool accepted = false;
    while (s > 1e-14) {
      const Vec trial = z + s * dz;
      if (auto v = barrier.Value(trial)) {
        const double f1 = tau * c.dot(trial) + *v;
        if (f1 <= f0 - 0.01 * s * decrement2) {
          z = trial;
          accepted = true;
          break;
        }
      }
      s *= 0.5;
    }
    ++steps;
    if (!accepted) {
      // No progress possible at this precision; treat as centered.
      return CenterOutcome::kConverged;
    }
    if (stop && stop(z)) return CenterOutcome::kStopped;
  }
  return CenterOutcome::kConverged;
}

struct Compiled {
  std::vector<AffineExpansion> expansions;  // problem constraints
  std::vector<double> scales;
  // Box rows for variable bounds: (coordinate, sign, limit): sign*x <= limit.
  struct BoundRow {
    int coordinate;
    double sign;
    double limit;
  };
  std::vector<BoundRow> bounds;
};

Compiled Compile(const LmiProblem& problem) {
  Compiled c;
  for (const auto& con : problem.constraints()) {
    AffineExpansion e = ExpandConstraint(problem, con);
    double s = e.constant.norm();
    for (const auto& t : e.terms) s = std::max(s, t.second.norm());
    c.scales.push_back(s > 0.0 ? 1.0 / s : 1.0);
    c.expansions.push_back(std::move(e));
  }
  int k = 0;
  for (const auto& v : problem.variables()) {
    for (int i = 0; i < v.coordinate_count(); ++i, ++k) {
      if (v.upper) c.bounds.push_back({k, 1.0, *v.upper});
      if (v.lower) c.bounds.push_back({k, -1.0, -*v.lower});
    }
  }
  return c;
}

// Barrier for  scale*(M(x) + margin I) <= t I  (phase one, t = z(n)) or
// scale*(M(x) + margin I) <= 0 (phase two).
Barrier MakeBarrier(const Compiled& c, int n, double margin, bool phase_one,
                    double coordinate_bound) {
  const int dim = phase_one ? n + 1 : n;
  Barrier barrier(dim);
  for (size_t j = 0; j < c.expansions.size(); ++j) {
    const auto& e = c.expansions[j];
    const double s = c.scales[j];
    const Eigen::Index size = e.constant.rows();
    BarrierBlock b;
    b.base = -s * (e.constant + margin * Mat::Identity(size, size));
    for (const auto& [a, f] : e.terms) b.d.emplace_back(a, -s * f);
    if (phase_one) b.d.emplace_back(n, Mat::Identity(size, size));
    barrier.Add(std::move(b));
  }
  for (const auto& row : c.bounds) {
    // sign*x + margin <= limit
    BarrierBlock b;
    b.base = Mat::Constant(1, 1, row.limit - margin);
    b.d.emplace_back(row.coordinate, Mat::Constant(1, 1, -row.sign));
    if (phase_one) b.d.emplace_back(n, Mat::Constant(1, 1, 1.0));
    barrier.Add(std::move(b));
  }
  for (int i = 0; i < n; ++i) {
    for (double sign : {1.0, -1.0}) {
      BarrierBlock b;
      b.base = Mat::Constant(1, 1, coordinate_bound);
      b.d.emplace_back(i, Mat::Constant(1, 1, -sign));
      barrier.Add(std::move(b));
    }
  }
  return barrier;
}

// Largest scaled violation of  M(x) + margin I <= 0  and the bound rows.
double PhaseOneSlack(const Compiled& c, const Vec& x, double margin) {
  double t = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < c.expansions.size(); ++j) {
    const auto& e = c.expansions[j];
    Mat m = e.constant;
    for (const auto& [a, f] : e.terms) m += x(a) * f;
    m *= c.scales[j];
    t = std::max(t, SymEigBounds(Symmetrize(m)).lambda_max + c.scales[j] * margin);
  }
  for (const auto& row : c.bounds) {
    t = std::max(t, row.sign * x(row.coordinate) + margin - row.limit);
  }
  return t;
}

}  // namespace

LmiSolution Solve(const LmiProblem& problem, const SolverOptions& options) {
  if (!(options.margin > 0.0)) {
    throw std::invalid_argument("Solve: margin must be positive");
  }
  LmiSolution sol;
  const int n = problem.coordinate_count();
  const Compiled compiled = Compile(problem);

  Vec c = Vec::Zero(n);
  double c0 = 0.0;
  if (problem.objective()) {
    const auto& obj = *problem.objective();
    c0 = obj(problem.ZeroAssignment());
    for (int i = 0; i < n; ++i) {
      Vec e = Vec::Zero(n);
      e(i) = 1.0;
      c(i) = obj(problem.FromCoordinates(e)) - c0;
    }
  }

  auto finish = [&](LmiStatus status, const Vec& x, std::string message) {
    sol.status = status;
    sol.assignment = problem.FromCoordinates(x);
    sol.objective_value = c0 + c.dot(x);
    sol.residuals.clear();
    sol.max_residual = -std::numeric_limits<double>::infinity();
    for (const auto& con : problem.constraints()) {
      const double lm = SymEigBounds(Symmetrize(con.map(sol.assignment))).lambda_max;
      sol.residuals.push_back(lm);
      sol.max_residual = std::max(sol.max_residual, lm);
    }
    sol.message = std::move(message);
    return sol;
  };

  // Phase one: minimize t subject to scaled(M + margin I) <= t I.
  Vec x = Vec::Zero(n);
  double t0 = PhaseOneSlack(compiled, x, options.margin);
  if (t0 >= 0.0) {
    const Barrier b1 = MakeBarrier(compiled, n, options.margin, true,
                                   options.coordinate_bound);
    Vec z(n + 1);
    z.head(n) = x;
    z(n) = t0 + 1.0;
    Vec c1 = Vec::Zero(n + 1);
    c1(n) = 1.0;
    auto feasible = [&](const Vec& zz) { return zz(n) < 0.0; };
    double tau = 1.0;
    bool found = false;
    for (int outer = 0; outer < options.max_outer_iterations; ++outer) {
      const CenterOutcome r =
          Center(b1, c1, tau, z, options, sol.newton_steps, feasible);
      if (r == CenterOutcome::kStopped || z(n) < 0.0) {
        found = true;
        break;
      }
      if (r == CenterOutcome::kFailed) {
        return finish(LmiStatus::kNumericalFailure, z.head(n),
                      "phase one: Newton system breakdown");
      }
      if (b1.parameter() / tau < 1e-12) break;
      tau *= options.barrier_growth;
    }
    if (!found) {
      sol.infeasibility = z(n);
      std::ostringstream os;
      os << "phase one optimum t* = " << z(n) << " >= 0";
      return finish(LmiStatus::kInfeasible, z.head(n), os.str());
    }
    x = z.head(n);
  }

  if (!problem.objective() || c.isZero(0.0)) {
    return finish(LmiStatus::kFeasible, x, "feasible point (no objective)");
  }

  // Phase two: barrier path on the margin-shifted constraints.
  const Barrier b2 = MakeBarrier(compiled, n, options.margin, false,
                                 options.coordinate_bound);
  double tau = 1.0 / std::max(1.0, c.norm());
  for (int outer = 0; outer < options.max_outer_iterations; ++outer) {
    const CenterOutcome r = Center(b2, c, tau, x, options, sol.newton_steps, {});
    if (r == CenterOutcome::kFailed) {
      return finish(LmiStatus::kNumericalFailure, x,
                    "phase two: Newton system breakdown");
    }
    const double gap = b2.parameter() / tau;
    if (gap <= options.gap_tolerance * std::max(1.0, std::abs(c0 + c.dot(x)))) {
      break;
    }
    tau *= options.barrier_growth;
  }
  if (x.cwiseAbs().maxCoeff() > 0.99 * options.coordinate_bound) {
    return finish(LmiStatus::kNumericalFailure, x,
                  "objective appears unbounded (coordinate bound active)");
  }
  finish(LmiStatus::kFeasible, x, "optimal");
  if (sol.max_residual > -options.margin * (1.0 - 1e-6)) {
    sol.status = LmiStatus::kNumericalFailure;
    sol.message = "returned point violates the requested margin";
  }
  return sol;
}

CheckReport CheckSolution(const LmiProblem& problem,
                          const Assignment& assignment, double tol) {
  for (const auto& v : problem.variables()) {
    const Mat& m = assignment.Get(v.name);
    if (m.rows() != v.rows || m.cols() != v.cols) {
      throw DimensionError("CheckSolution: shape mismatch for '" + v.name + "'");
    }
  }
  CheckReport report;
  report.max_lambda = -std::numeric_limits<double>::infinity();
  for (const auto& con : problem.constraints()) {
    ConstraintCheck c;
    c.name = con.name;
    c.lambda_max = SymEigBounds(Symmetrize(con.map(assignment))).lambda_max;
    c.pass = c.lambda_max <= tol;
    report.max_lambda = std::max(report.max_lambda, c.lambda_max);
    report.constraints.push_back(std::move(c));
  }
  for (const auto& v : problem.variables()) {
    if (!v.lower && !v.upper) continue;
    const Mat& m = assignment.Get(v.name);
    double worst = -std::numeric_limits<double>::infinity();
    if (v.upper) worst = std::max(worst, (m.array() - *v.upper).maxCoeff());
    if (v.lower) worst = std::max(worst, (*v.lower - m.array()).maxCoeff());
    report.constraints.push_back({v.name + " bounds", worst, worst <= tol});
    report.max_lambda = std::max(report.max_lambda, worst);
  }
  report.pass = std::all_of(report.constraints.begin(), report.constraints.end(),
                            [](const ConstraintCheck& c) { return c.pass; });
  return report;
}

}  // namespace nodectl
