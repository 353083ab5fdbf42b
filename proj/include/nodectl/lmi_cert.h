#pragma once

// Contraction certificates for the autonomous model  xdot = A x + Z(x):
// block-matrix conditions in P (non-convex, with the rate gamma) and their
// convex counterparts in (P, mu) with gamma = p_low / mu, plus the deviation
// envelopes a certificate implies.

#include <optional>
#include <string>
#include <vector>

#include "nodectl/lmi_solver.h"
#include "nodectl/nn_model.h"
#include "nodectl/numerics.h"
#include "nodectl/sector.h"

namespace nodectl {

/// U1 : [x; w^1..w^{k-1}; w^k] -> [x; w^k], and
/// U2 : same input -> [x; w^1..w^{k-1}; w^1..w^{k-1}; w^k].
/// `a` is m_1 + ... + m_{k-1} (zero when k = 1, where both are identities).
struct Selectors {
  Mat u1;
  Mat u2;
};
Selectors MakeSelectors(int state_dim, int a, int last_hidden);
/// diag(I_{state_dim}, U).
Mat BarSelector(const Mat& u, int state_dim);

/// [[-2 Q1^T Q2, Q1^T + Q2^T], [*, -2I]].
Mat LemmaMatrix(const QPair& q);

/// Sum of the hidden widths m_1..m_{k-1}.
int InnerWidth(const FeedforwardNet& net);

/// U1^T [[a_cl^T P + P a_cl + gamma P, P w_out], [*, 0]] U1 + U2^T Lemma U2.
/// With k = 1 this is the single-layer 2x2 block form.
Mat ContractionMatrix(const Mat& a_cl, const Mat& w_out, const QPair& q,
                      int inner_width, const Mat& p, double gamma);

/// Non-convex contraction condition at (P, gamma); <= 0 certifies.
/// k = 1 uses the explicit 2x2 block form, k >= 2 the selector form.
Mat AssembleCertNonconvex(const NodeModel& model, const SectorBounds& bounds,
                          const Mat& p, double gamma);

struct CertConvexOptions {
  double p_low = 1.0;
  /// Optional cap P <= p_up_cap I. Without it p_up is recovered after the
  /// solve as lambda_max(P).
  std::optional<double> p_up_cap;
};

/// Convex certificate problem over P (symmetric) and mu (scalar), minimizing
/// mu. Constraint names: "contraction", "p_low".
LmiProblem AssembleCertConvex(const NodeModel& model, const SectorBounds& bounds,
                              const CertConvexOptions& options = {});

/// The convex contraction block evaluated at (P, mu).
Mat CertConvexMatrix(const NodeModel& model, const SectorBounds& bounds,
                     const Mat& p, double mu);

struct ContractionCertificate {
  Mat P;
  double gamma = 0.0;
  double mu = 0.0;
  double p_low = 0.0;
  double p_up = 0.0;
  std::string form;  // "single-layer-convex" or "multilayer-convex"
  std::vector<double> residuals;

  double c() const;     // sqrt(p_up / p_low)
  double rate() const;  // gamma / 2
};

struct CertifyOptions {
  CertConvexOptions convex;
  SolverOptions solver;
  double verify_tol = 1e-8;
};

enum class CertifyStatus { kCertified, kInfeasible, kNumericalFailure,
                           kVerificationFailed };
const char* ToString(CertifyStatus status);

struct CertifyResult {
  CertifyStatus status = CertifyStatus::kInfeasible;
  std::optional<ContractionCertificate> certificate;
  LmiSolution solution;
  std::string message;
};

CertifyResult Certify(const NodeModel& model, const SectorBounds& bounds,
                      const CertifyOptions& options = {});

struct CertificateCheck {
  double lower_margin = 0.0;   // lambda_min(P - p_low I)
  double upper_margin = 0.0;   // lambda_min(p_up I - P)
  double lmi_lambda_max = 0.0;
  bool lower_ok = false;
  bool upper_ok = false;
  bool lmi_ok = false;
  bool pass = false;
};

/// Plug-in check of a certificate: p_low I <= P <= p_up I (Cholesky on the
/// shifted matrices, tol-relaxed) and the non-convex condition at (P, gamma).
CertificateCheck VerifyCertificate(const NodeModel& model,
                                   const SectorBounds& bounds,
                                   const ContractionCertificate& cert,
                                   double tol);

enum class EnvelopeMode { kBetweenTrajectories, kToEquilibrium };

struct EnvelopeParams {
  double c = 1.0;
  double rate = 0.0;
  double radius = 0.0;
};

/// c, rate gamma/2 and the asymptotic radius K eps/gamma c.
EnvelopeParams MakeEnvelope(double p_low, double p_up, double gamma,
                            double epsilon, EnvelopeMode mode);

/// c d0 e^{-gamma t/2} + K (eps/gamma) c (1 - e^{-gamma t/2}), K = 2 or 4.
double DeviationEnvelope(double p_low, double p_up, double gamma,
                         double epsilon, double d0, double t,
                         EnvelopeMode mode);
double DeviationEnvelope(const ContractionCertificate& cert, double epsilon,
                         double d0, double t, EnvelopeMode mode);

}  // namespace nodectl
