#include "nodectl/synthesis.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nodectl {

namespace {

Mat Identity(Eigen::Index n) { return Mat::Identity(n, n); }

void CheckPlant(const NodeModel& model, const Mat& g,
                const SectorBounds& bounds) {
  model.Validate();
  if (g.rows() != model.state_dim() || g.cols() < 1) {
    throw DimensionError("g must have " + std::to_string(model.state_dim()) +
                         " rows and at least one column");
  }
  if (!g.allFinite()) throw std::invalid_argument("g has non-finite entries");
  if (static_cast<int>(bounds.per_layer.size()) != model.net.hidden_layers()) {
    throw DimensionError("sector bounds do not match the network depth");
  }
}

// Q pair restricted to hidden layers first..last (1-based).
QPair Layers(const FeedforwardNet& net, const SectorBounds& bounds, int first,
             int last) {
  return BuildQMatrices(net, bounds, first, last);
}

}  // namespace

Cancellation MinNormCancellation(const Mat& w_out, const Mat& g) {
  if (w_out.rows() != g.rows()) {
    throw DimensionError("MinNormCancellation: W_out and g row counts differ");
  }
  const Mat g_pinv = Pinv(g);
  Cancellation c;
  c.w_umin = -g_pinv * w_out;
  c.w_min = (Identity(g.rows()) - g * g_pinv) * w_out;
  return c;
}

Vec ControllerSpec::Evaluate(const FeedforwardNet& net, const Vec& x) const {
  const ForwardResult fr = ForwardWithActivations(net, x);
  Vec u = H * x + W_umin * fr.activations.back();
  if (b_u.size() > 0) u += b_u;
  return u;
}

Mat AssembleCtrlNonconvex(const NodeModel& model, const Mat& g,
                          const SectorBounds& bounds, const Mat& p,
                          double gamma, const Mat& h) {
  CheckPlant(model, g, bounds);
  RequireSymmetric(p, "P");
  if (h.rows() != g.cols() || h.cols() != model.state_dim()) {
    throw DimensionError("H must be l x m");
  }
  const auto& net = model.net;
  const Mat a_cl = model.A + g * h;
  const Mat w_min = MinNormCancellation(net.weights.back(), g).w_min;
  if (net.hidden_layers() == 1) {
    const double al = bounds.per_layer[0].alpha;
    const double be = bounds.per_layer[0].beta;
    const Mat& w1 = net.weights[0];
    return AssembleBlocks({
        {Mat(a_cl.transpose() * p + p * a_cl + gamma * p -
             2.0 * al * be * w1.transpose() * w1),
         Mat(p * w_min + (al + be) * w1.transpose())},
        {StarBlock{}, Mat(-2.0 * Identity(w1.rows()))},
    });
  }
  return ContractionMatrix(a_cl, w_min, BuildQMatrices(net, bounds),
                           InnerWidth(net), p, gamma);
}

const char* ToString(CtrlForm form) {
  switch (form) {
    case CtrlForm::kAuto:
      return "auto";
    case CtrlForm::kSingleLayer:
      return "single-layer";
    case CtrlForm::kTwoLayerReduced:
      return "two-layer-reduced";
    case CtrlForm::kGeneral:
      return "multilayer";
  }
  return "unknown";
}

CtrlForm ResolveForm(CtrlForm form, int hidden_layers) {
  if (hidden_layers < 1) throw DimensionError("network has no hidden layer");
  if (form == CtrlForm::kAuto) {
    if (hidden_layers == 1) return CtrlForm::kSingleLayer;
    if (hidden_layers == 2) return CtrlForm::kTwoLayerReduced;
    return CtrlForm::kGeneral;
  }
  if (form == CtrlForm::kSingleLayer && hidden_layers != 1) {
    throw std::invalid_argument("single-layer form needs k = 1");
  }
  if (form == CtrlForm::kTwoLayerReduced && hidden_layers != 2) {
    throw std::invalid_argument("two-layer reduction needs k = 2");
  }
  if (form == CtrlForm::kGeneral && hidden_layers < 2) {
    throw std::invalid_argument("multilayer form needs k >= 2");
  }
  return form;
}

SingleLayerCoefficients SingleLayerCoefficientsFor(double alpha, double beta) {
  SingleLayerCoefficients c;
  c.width = beta - alpha;
  if (c.width < kMinSectorWidth) {
    c.width = kMinSectorWidth;
    c.clamped = true;
  }
  c.quadratic = 2.0 * alpha * beta / (c.width * c.width);
  c.linear = (alpha + beta) / c.width;
  return c;
}

double FirstLayerLambdaMin(const FeedforwardNet& net,
                           const SectorBounds& bounds) {
  const QPair q = Layers(net, bounds, 1, 1);
  return SymEigBounds(Symmetrize(q.q1.transpose() * q.q2)).lambda_min;
}

Mat CtrlConvexMatrix(const NodeModel& model, const Mat& g,
                     const SectorBounds& bounds, const Mat& s, const Mat& y,
                     double mu, double s_low, CtrlForm form) {
  CheckPlant(model, g, bounds);
  const auto& net = model.net;
  const Eigen::Index m = model.state_dim();
  if (s.rows() != m || s.cols() != m || y.rows() != g.cols() || y.cols() != m) {
    throw DimensionError("CtrlConvexMatrix: S must be m x m and Y l x m");
  }
  form = ResolveForm(form, net.hidden_layers());
  const Mat& a = model.A;
  const Mat w_min = MinNormCancellation(net.weights.back(), g).w_min;
  const Mat asgy = a * s + g * y;
  const Mat sym = asgy + asgy.transpose();

  if (form == CtrlForm::kSingleLayer) {
    const double al = bounds.per_layer[0].alpha;
    const double be = bounds.per_layer[0].beta;
    const SingleLayerCoefficients c = SingleLayerCoefficientsFor(al, be);
    const Mat& w1 = net.weights[0];
    const Mat r_bar = sym - c.quadratic * w_min * w_min.transpose();
    const Mat r_tilde = c.linear * w_min + c.width * s * w1.transpose();
    return AssembleBlocks({
        {Mat(-mu * Identity(m)), s, ZeroBlock{}},
        {StarBlock{}, r_bar, r_tilde},
        {StarBlock{}, StarBlock{}, Mat(-2.0 * Identity(w1.rows()))},
    });
  }

  const double lambda = FirstLayerLambdaMin(net, bounds);
  const QPair q1 = Layers(net, bounds, 1, 1);
  const Mat first_cross = s * (q1.q1 + q1.q2).transpose();

  if (form == CtrlForm::kTwoLayerReduced) {
    const QPair q2 = Layers(net, bounds, 2, 2);
    const Eigen::Index m1 = net.dims[1];
    const Mat r_bar = sym - 2.0 * s_low * lambda * s;
    return AssembleBlocks({
        {Mat(-mu * Identity(m)), s, ZeroBlock{}, ZeroBlock{}},
        {StarBlock{}, r_bar, first_cross, w_min},
        {StarBlock{}, StarBlock{},
         Mat(-2.0 * q2.q1.transpose() * q2.q2 - 2.0 * Identity(m1)),
         Mat((q2.q1 + q2.q2).transpose())},
        {StarBlock{}, StarBlock{}, StarBlock{},
         Mat(-2.0 * Identity(q2.q1.rows()))},
    });
  }

  // General selector form.
  const int k = net.hidden_layers();
  const int inner = InnerWidth(net);
  const int mk = net.dims[k];
  const QPair qa = Layers(net, bounds, 2, k);
  const Mat x_bar = BlockDiag({Mat(-2.0 * s_low * lambda * s),
                               Mat(-2.0 * qa.q1.transpose() * qa.q2)});
  const Mat x_tilde = BlockDiag({first_cross, Mat((qa.q1 + qa.q2).transpose())});
  const Selectors sel = MakeSelectors(static_cast<int>(m), inner, mk);
  const Mat u1 = BarSelector(sel.u1, static_cast<int>(m));
  const Mat u2 = BarSelector(sel.u2, static_cast<int>(m));
  const Mat top = AssembleBlocks({
      {Mat(-mu * Identity(m)), s, Mat::Zero(m, mk)},
      {StarBlock{}, sym, w_min},
      {StarBlock{}, StarBlock{}, Mat::Zero(mk, mk)},
  });
  const Mat bottom = AssembleBlocks({
      {Mat::Zero(m, m), Mat::Zero(m, x_bar.cols()), Mat::Zero(m, x_tilde.cols())},
      {StarBlock{}, x_bar, x_tilde},
      {StarBlock{}, StarBlock{}, Mat(-2.0 * Identity(x_tilde.cols()))},
  });
  return u1.transpose() * top * u1 + u2.transpose() * bottom * u2;
}

LmiProblem AssembleCtrlConvex(const NodeModel& model, const Mat& g,
                              const SectorBounds& bounds,
                              const CtrlConvexOptions& options) {
  CheckPlant(model, g, bounds);
  if (!(options.s_low > 0.0)) {
    throw std::invalid_argument("AssembleCtrlConvex: s_low must be positive");
  }
  const CtrlForm form = ResolveForm(options.form, model.net.hidden_layers());
  const int m = model.state_dim();
  const int l = static_cast<int>(g.cols());
  const double s_low = options.s_low;
  LmiProblem problem;
  problem.AddSymmetric("S", m);
  problem.AddRectangular("Y", l, m);
  problem.AddScalar("mu");
  problem.AddConstraint(
      "contraction", [model, g, bounds, s_low, form](const Assignment& x) {
        return CtrlConvexMatrix(model, g, bounds, x.Get("S"), x.Get("Y"),
                                x.Scalar("mu"), s_low, form);
      });
  problem.AddConstraint("s_low", [s_low, m](const Assignment& x) {
    return Mat(s_low * Mat::Identity(m, m) - x.Get("S"));
  });
  if (options.s_up_cap) {
    const double cap = *options.s_up_cap;
    problem.AddConstraint("s_up", [cap, m](const Assignment& x) {
      return Mat(x.Get("S") - cap * Mat::Identity(m, m));
    });
  }
  auto norm_block = [m, l](const Mat& y, double t) {
    return AssembleBlocks({
        {Mat(-t * Mat::Identity(l, l)), y},
        {StarBlock{}, Mat(-t * Mat::Identity(m, m))},
    });
  };
  if (options.gain_bound) {
    const double eta = *options.gain_bound * s_low;
    problem.AddConstraint("gain", [norm_block, eta](const Assignment& x) {
      return norm_block(x.Get("Y"), eta);
    });
  }
  if (options.mu_cap) {
    const double cap = *options.mu_cap;
    problem.AddConstraint("mu_cap", [cap](const Assignment& x) {
      return Mat::Constant(1, 1, x.Scalar("mu") - cap);
    });
  }
  if (options.minimize_gain) {
    problem.AddScalar("t");
    problem.AddConstraint("gain_objective", [norm_block](const Assignment& x) {
      return norm_block(x.Get("Y"), x.Scalar("t"));
    });
    problem.SetObjective([](const Assignment& x) { return x.Scalar("t"); });
  } else {
    problem.SetObjective([](const Assignment& x) { return x.Scalar("mu"); });
  }
  return problem;
}

double NeighborhoodRadius(double epsilon, double mu, double s_low,
                          double s_up) {
  if (epsilon < 0.0 || mu < 0.0 || !(s_low > 0.0) || s_up < 0.0) {
    throw std::invalid_argument("NeighborhoodRadius: invalid arguments");
  }
  return 4.0 * epsilon * mu / s_low * std::sqrt(s_up / s_low);
}

std::vector<double> LogGrid(double lo, double hi, int per_decade) {
  if (!(lo > 0.0) || hi < lo || per_decade < 1) {
    throw std::invalid_argument("LogGrid: need 0 < lo <= hi");
  }
  const int n =
      static_cast<int>(std::lround(std::log10(hi / lo) * per_decade));
  std::vector<double> out;
  for (int i = 0; i <= n; ++i) {
    out.push_back(lo * std::pow(10.0, static_cast<double>(i) / per_decade));
  }
  return out;
}

std::vector<double> LogGridCount(double lo, double hi, int count) {
  if (!(lo > 0.0) || hi < lo || count < 1) {
    throw std::invalid_argument("LogGridCount: need 0 < lo <= hi");
  }
  if (count == 1) return {lo};
  std::vector<double> out;
  const double step = std::log(hi / lo) / (count - 1);
  for (int i = 0; i < count; ++i) out.push_back(lo * std::exp(step * i));
  out.back() = hi;
  return out;
}

const char* ToString(SynthesisStatus status) {
  switch (status) {
    case SynthesisStatus::kOk:
      return "ok";
    case SynthesisStatus::kInfeasible:
      return "infeasible";
    case SynthesisStatus::kVerificationFailed:
      return "verification-failed";
  }
  return "unknown";
}

SynthesisResult Synthesize(const NodeModel& model, const Mat& g,
                           const SectorBounds& bounds,
                           const SynthesisOptions& options) {
  CheckPlant(model, g, bounds);
  const CtrlForm form = ResolveForm(options.form, model.net.hidden_layers());
  SynthesisResult result;

  struct Best {
    double objective;
    double mu;
    double kappa;
    Mat s;
    Mat y;
    double s_low;
  };
  std::optional<Best> best;

  for (double s_low : options.s_low_grid) {
    for (double kappa : options.kappa_grid) {
      if (kappa > options.kappa_max * (1.0 + 1e-12) || kappa < 1.0) continue;
      CtrlConvexOptions co;
      co.s_low = s_low;
      co.s_up_cap = kappa * s_low;
      co.gain_bound = options.gain_bound;
      co.form = form;
      const LmiProblem problem = AssembleCtrlConvex(model, g, bounds, co);
      const LmiSolution sol = Solve(problem, options.solver);
      SweepPoint pt;
      pt.s_low = s_low;
      pt.kappa = kappa;
      pt.status = ToString(sol.status);
      pt.max_residual = sol.max_residual;
      pt.message = sol.message;
      if (sol.status == LmiStatus::kFeasible) {
        const Mat s = Symmetrize(sol.assignment.Get("S"));
        const SymEigReport ev = SymEigBounds(s);
        pt.mu = sol.assignment.Scalar("mu");
        pt.s_min = ev.lambda_min;
        pt.s_max = ev.lambda_max;
        const double s_eff = std::min(s_low, ev.lambda_min);
        pt.objective = pt.mu / s_eff * std::sqrt(ev.lambda_max / s_eff);
        const bool better =
            !best || pt.objective < best->objective ||
            (pt.objective == best->objective &&
             (pt.mu < best->mu || (pt.mu == best->mu && kappa < best->kappa)));
        if (better && pt.mu > 0.0) {
          best = Best{pt.objective, pt.mu, kappa, s,
                      sol.assignment.Get("Y"), s_low};
        }
      }
      result.sweep_log.push_back(pt);
    }
  }

  if (!best) {
    result.status = SynthesisStatus::kInfeasible;
    result.message = "every sweep point was infeasible";
    return result;
  }

  if (options.gain_refine_slack >= 0.0) {
    CtrlConvexOptions co;
    co.s_low = best->s_low;
    co.s_up_cap = best->kappa * best->s_low;
    co.gain_bound = options.gain_bound;
    co.mu_cap = best->mu * (1.0 + options.gain_refine_slack);
    co.minimize_gain = true;
    co.form = form;
    const LmiSolution sol =
        Solve(AssembleCtrlConvex(model, g, bounds, co), options.solver);
    if (sol.status == LmiStatus::kFeasible) {
      best->s = Symmetrize(sol.assignment.Get("S"));
      best->y = sol.assignment.Get("Y");
      best->mu = sol.assignment.Scalar("mu");
    }
  }

  ControllerSpec spec;
  spec.S = best->s;
  spec.Y = best->y;
  spec.mu = best->mu;
  const SymEigReport ev = SymEigBounds(spec.S);
  spec.s_low = std::min(best->s_low, ev.lambda_min);
  spec.s_up = ev.lambda_max;
  spec.H = spec.S.ldlt().solve(spec.Y.transpose()).transpose();
  spec.W_umin = MinNormCancellation(model.net.weights.back(), g).w_umin;
  spec.b_u = Vec::Zero(g.cols());
  spec.gamma = spec.s_low / spec.mu;
  spec.radius = NeighborhoodRadius(model.epsilon, spec.mu, spec.s_low, spec.s_up);
  spec.form = ToString(form);
  spec.sweep_log = result.sweep_log;

  const Mat p = Symmetrize(spec.S.inverse());
  result.plugin_lambda_max =
      SymEigBounds(AssembleCtrlNonconvex(model, g, bounds, p, spec.gamma, spec.H))
          .lambda_max;
  result.spec = spec;
  if (result.plugin_lambda_max > options.verify_tol) {
    result.status = SynthesisStatus::kVerificationFailed;
    std::ostringstream os;
    os << "non-convex plug-in check failed: lambda_max = "
       << result.plugin_lambda_max;
    result.message = os.str();
    return result;
  }
  result.status = SynthesisStatus::kOk;
  result.message = "ok";
  return result;
}

BiasChoice SelectBias(const FeedforwardNet& net, const Mat& g, BiasMode mode,
                      const Vec& custom) {
  net.Validate();
  BiasChoice out;
  const Eigen::Index l = g.cols();
  switch (mode) {
    case BiasMode::kZero:
      out.b_u = Vec::Zero(l);
      return out;
    case BiasMode::kCustom:
      if (custom.size() != l) {
        throw DimensionError("custom bias must have one entry per input");
      }
      out.b_u = custom;
      return out;
    case BiasMode::kShiftToOrigin: {
      if (net.hidden_layers() != 1) {
        throw std::invalid_argument(
            "shift-to-origin bias is only defined for one hidden layer");
      }
      const Cancellation c = MinNormCancellation(net.weights.back(), g);
      const Vec w0 = net.biases[0].array().tanh().matrix();
      const Vec constant = c.w_min * w0 + net.biases.back();
      out.b_u = -Pinv(g) * constant;
      out.residual = (constant + g * out.b_u).norm();
      out.exact = out.residual <= 1e-12 * std::max(1.0, constant.norm());
      return out;
    }
  }
  return out;
}

}  // namespace nodectl
