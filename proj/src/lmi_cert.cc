#include "nodectl/lmi_cert.h"

#include <cmath>
#include <stdexcept>

namespace nodectl {

namespace {

void CheckBoundsMatch(const NodeModel& model, const SectorBounds& bounds) {
  model.Validate();
  if (static_cast<int>(bounds.per_layer.size()) != model.net.hidden_layers()) {
    throw DimensionError("sector bounds cover " +
                         std::to_string(bounds.per_layer.size()) +
                         " layers, model has " +
                         std::to_string(model.net.hidden_layers()));
  }
}

Mat Identity(Eigen::Index n) { return Mat::Identity(n, n); }

}  // namespace

Selectors MakeSelectors(int state_dim, int a, int last_hidden) {
  if (state_dim < 1 || a < 0 || last_hidden < 1) {
    throw DimensionError("MakeSelectors: invalid widths");
  }
  const int n = state_dim + a + last_hidden;
  Selectors s;
  s.u1 = Mat::Zero(state_dim + last_hidden, n);
  s.u1.topLeftCorner(state_dim, state_dim).setIdentity();
  s.u1.bottomRightCorner(last_hidden, last_hidden).setIdentity();
  s.u2 = Mat::Zero(state_dim + 2 * a + last_hidden, n);
  s.u2.topLeftCorner(state_dim, state_dim).setIdentity();
  s.u2.block(state_dim, state_dim, a, a).setIdentity();
  s.u2.block(state_dim + a, state_dim, a, a).setIdentity();
  s.u2.bottomRightCorner(last_hidden, last_hidden).setIdentity();
  return s;
}

Mat BarSelector(const Mat& u, int state_dim) {
  return BlockDiag({Identity(state_dim), u});
}

Mat LemmaMatrix(const QPair& q) {
  if (q.q1.rows() != q.q2.rows() || q.q1.cols() != q.q2.cols()) {
    throw DimensionError("LemmaMatrix: Q1 and Q2 differ in shape");
  }
  return AssembleBlocks({
      {Mat(-2.0 * q.q1.transpose() * q.q2), Mat(q.q1.transpose() + q.q2.transpose())},
      {StarBlock{}, Mat(-2.0 * Identity(q.q1.rows()))},
  });
}

int InnerWidth(const FeedforwardNet& net) {
  int a = 0;
  for (int i = 1; i < net.hidden_layers(); ++i) a += net.dims[i];
  return a;
}

Mat ContractionMatrix(const Mat& a_cl, const Mat& w_out, const QPair& q,
                      int inner_width, const Mat& p, double gamma) {
  const int m = static_cast<int>(a_cl.rows());
  const int mk = static_cast<int>(w_out.cols());
  if (p.rows() != m || p.cols() != m || a_cl.cols() != m || w_out.rows() != m) {
    throw DimensionError("ContractionMatrix: shape mismatch");
  }
  if (q.q1.rows() != inner_width + mk || q.q1.cols() != m + inner_width) {
    throw DimensionError("ContractionMatrix: Q shape does not match widths");
  }
  const Selectors sel = MakeSelectors(m, inner_width, mk);
  const Mat inner = AssembleBlocks({
      {Mat(a_cl.transpose() * p + p * a_cl + gamma * p), Mat(p * w_out)},
      {StarBlock{}, ZeroBlock{}},
  });
  return sel.u1.transpose() * inner * sel.u1 +
         sel.u2.transpose() * LemmaMatrix(q) * sel.u2;
}

Mat AssembleCertNonconvex(const NodeModel& model, const SectorBounds& bounds,
                          const Mat& p, double gamma) {
  CheckBoundsMatch(model, bounds);
  RequireSymmetric(p, "P");
  const auto& net = model.net;
  const Mat& a = model.A;
  const Mat& w_out = net.weights.back();
  if (net.hidden_layers() == 1) {
    const double al = bounds.per_layer[0].alpha;
    const double be = bounds.per_layer[0].beta;
    const Mat& w1 = net.weights[0];
    return AssembleBlocks({
        {Mat(a.transpose() * p + p * a + gamma * p -
             2.0 * al * be * w1.transpose() * w1),
         Mat(p * w_out + (al + be) * w1.transpose())},
        {StarBlock{}, Mat(-2.0 * Identity(w1.rows()))},
    });
  }
  return ContractionMatrix(a, w_out, BuildQMatrices(net, bounds),
                           InnerWidth(net), p, gamma);
}

Mat CertConvexMatrix(const NodeModel& model, const SectorBounds& bounds,
                     const Mat& p, double mu) {
  CheckBoundsMatch(model, bounds);
  const auto& net = model.net;
  const Mat& a = model.A;
  const Mat& w_out = net.weights.back();
  const Eigen::Index m = a.rows();
  if (p.rows() != m || p.cols() != m) {
    throw DimensionError("CertConvexMatrix: P shape mismatch");
  }
  if (net.hidden_layers() == 1) {
    const double al = bounds.per_layer[0].alpha;
    const double be = bounds.per_layer[0].beta;
    const Mat& w1 = net.weights[0];
    return AssembleBlocks({
        {Mat(-mu * Identity(m)), p, ZeroBlock{}},
        {StarBlock{},
         Mat(-2.0 * al * be * w1.transpose() * w1 + a.transpose() * p + p * a),
         Mat(p * w_out + (al + be) * w1.transpose())},
        {StarBlock{}, StarBlock{}, Mat(-2.0 * Identity(w1.rows()))},
    });
  }
  const int inner = InnerWidth(net);
  const int mk = static_cast<int>(w_out.cols());
  const Selectors sel = MakeSelectors(static_cast<int>(m), inner, mk);
  const Mat u1 = BarSelector(sel.u1, static_cast<int>(m));
  const Mat u2 = BarSelector(sel.u2, static_cast<int>(m));
  const Mat first = AssembleBlocks({
      {Mat(-mu * Identity(m)), p, Mat::Zero(m, mk)},
      {StarBlock{}, Mat(a.transpose() * p + p * a), Mat(p * w_out)},
      {StarBlock{}, StarBlock{}, Mat::Zero(mk, mk)},
  });
  const Mat second =
      BlockDiag({Mat::Zero(m, m), LemmaMatrix(BuildQMatrices(net, bounds))});
  return u1.transpose() * first * u1 + u2.transpose() * second * u2;
}

LmiProblem AssembleCertConvex(const NodeModel& model, const SectorBounds& bounds,
                              const CertConvexOptions& options) {
  CheckBoundsMatch(model, bounds);
  if (!(options.p_low > 0.0)) {
    throw std::invalid_argument("AssembleCertConvex: p_low must be positive");
  }
  const int m = model.state_dim();
  LmiProblem problem;
  problem.AddSymmetric("P", m);
  problem.AddScalar("mu");
  // Copies keep the problem independent of the caller's lifetime.
  problem.AddConstraint("contraction", [model, bounds](const Assignment& x) {
    return CertConvexMatrix(model, bounds, x.Get("P"), x.Scalar("mu"));
  });
  const double p_low = options.p_low;
  problem.AddConstraint("p_low", [p_low, m](const Assignment& x) {
    return Mat(p_low * Mat::Identity(m, m) - x.Get("P"));
  });
  if (options.p_up_cap) {
    const double cap = *options.p_up_cap;
    problem.AddConstraint("p_up", [cap, m](const Assignment& x) {
      return Mat(x.Get("P") - cap * Mat::Identity(m, m));
    });
  }
  problem.SetObjective([](const Assignment& x) { return x.Scalar("mu"); });
  return problem;
}

double ContractionCertificate::c() const { return std::sqrt(p_up / p_low); }
double ContractionCertificate::rate() const { return 0.5 * gamma; }

const char* ToString(CertifyStatus status) {
  switch (status) {
    case CertifyStatus::kCertified:
      return "certified";
    case CertifyStatus::kInfeasible:
      return "infeasible";
    case CertifyStatus::kNumericalFailure:
      return "numerical-failure";
    case CertifyStatus::kVerificationFailed:
      return "verification-failed";
  }
  return "unknown";
}

CertifyResult Certify(const NodeModel& model, const SectorBounds& bounds,
                      const CertifyOptions& options) {
  CertifyResult result;
  const LmiProblem problem = AssembleCertConvex(model, bounds, options.convex);
  result.solution = Solve(problem, options.solver);
  if (result.solution.status == LmiStatus::kInfeasible) {
    result.status = CertifyStatus::kInfeasible;
    result.message = "convex contraction LMI infeasible: " + result.solution.message;
    return result;
  }
  if (result.solution.status == LmiStatus::kNumericalFailure) {
    result.status = CertifyStatus::kNumericalFailure;
    result.message = result.solution.message;
    return result;
  }
  ContractionCertificate cert;
  cert.P = Symmetrize(result.solution.assignment.Get("P"));
  cert.mu = result.solution.assignment.Scalar("mu");
  cert.p_low = options.convex.p_low;
  cert.p_up = SymEigBounds(cert.P).lambda_max * (1.0 + 1e-9);
  cert.gamma = cert.p_low / cert.mu;
  cert.form = model.net.hidden_layers() == 1 ? "single-layer-convex"
                                             : "multilayer-convex";
  cert.residuals = result.solution.residuals;
  const CertificateCheck check =
      VerifyCertificate(model, bounds, cert, options.verify_tol);
  result.certificate = cert;
  if (!check.pass) {
    result.status = CertifyStatus::kVerificationFailed;
    result.message = "non-convex plug-in check failed, lambda_max = " +
                     std::to_string(check.lmi_lambda_max);
    return result;
  }
  result.status = CertifyStatus::kCertified;
  result.message = "certified";
  return result;
}

CertificateCheck VerifyCertificate(const NodeModel& model,
                                   const SectorBounds& bounds,
                                   const ContractionCertificate& cert,
                                   double tol) {
  CertificateCheck out;
  const Eigen::Index m = cert.P.rows();
  const Mat lower = Symmetrize(cert.P) - cert.p_low * Identity(m);
  const Mat upper = cert.p_up * Identity(m) - Symmetrize(cert.P);
  out.lower_margin = SymEigBounds(lower).lambda_min;
  out.upper_margin = SymEigBounds(upper).lambda_min;
  out.lower_ok = CholeskyPd(lower + tol * Identity(m)).has_value();
  out.upper_ok = CholeskyPd(upper + tol * Identity(m)).has_value();
  out.lmi_lambda_max =
      SymEigBounds(AssembleCertNonconvex(model, bounds, Symmetrize(cert.P),
                                         cert.gamma))
          .lambda_max;
  out.lmi_ok = out.lmi_lambda_max <= tol;
  out.pass = out.lower_ok && out.upper_ok && out.lmi_ok && cert.gamma > 0.0;
  return out;
}

EnvelopeParams MakeEnvelope(double p_low, double p_up, double gamma,
                            double epsilon, EnvelopeMode mode) {
  if (!(p_low > 0.0) || p_up < p_low || !(gamma > 0.0) || epsilon < 0.0) {
    throw std::invalid_argument("MakeEnvelope: invalid certificate constants");
  }
  const double k = mode == EnvelopeMode::kBetweenTrajectories ? 2.0 : 4.0;
  EnvelopeParams e;
  e.c = std::sqrt(p_up / p_low);
  e.rate = 0.5 * gamma;
  e.radius = k * epsilon / gamma * e.c;
  return e;
}

double DeviationEnvelope(double p_low, double p_up, double gamma,
                         double epsilon, double d0, double t,
                         EnvelopeMode mode) {
  if (d0 < 0.0 || t < 0.0) {
    throw std::invalid_argument("DeviationEnvelope: d0 and t must be >= 0");
  }
  const EnvelopeParams e = MakeEnvelope(p_low, p_up, gamma, epsilon, mode);
  const double decay = std::exp(-e.rate * t);
  return e.c * d0 * decay + e.radius * (1.0 - decay);
}

double DeviationEnvelope(const ContractionCertificate& cert, double epsilon,
                         double d0, double t, EnvelopeMode mode) {
  return DeviationEnvelope(cert.p_low, cert.p_up, cert.gamma, epsilon, d0, t,
                           mode);
}

}  // namespace nodectl
