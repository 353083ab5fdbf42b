// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nodectl/dynamics_sim.h"
#include "nodectl/lmi_cert.h"
#include "nodectl/lmi_solver.h"
#include "nodectl/pipeline.h"
#include "nodectl/reference_fixtures.h"
#include "nodectl/sector.h"
#include "nodectl/synthesis.h"
#include "test_util.h"

namespace nodectl {
namespace {

using testing::Rng;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void Require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[fail] ";
    }
    detail << what << "; ";
  }
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

Mat MaxAbsDiff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs(); }

// Synthesis runs shared between criteria.
struct Synthesized {
  SynthesisResult result;
  double seconds = 0.0;
};

const Synthesized& PendulumSynthesis() {
  static const Synthesized s = [] {
    const ReferenceCase rc = PendulumReference();
    const SectorBounds b = PropagateSectorBounds(rc.model.net, rc.model.box);
    const auto t0 = Clock::now();
    Synthesized out;
    out.result = Synthesize(rc.model, rc.g, b, SynthesisOptions{});
    out.seconds = Seconds(t0);
    return out;
  }();
  return s;
}

double MaxPairwiseTerminal(const std::vector<Trajectory>& trajs) {
  double worst = 0.0;
  for (size_t i = 0; i < trajs.size(); ++i)
    for (size_t j = i + 1; j < trajs.size(); ++j)
      worst = std::max(worst, (trajs[i].states.back() - trajs[j].states.back()).norm());
  return worst;
}

// Pairwise convergence plus the envelope against the oracle equilibrium.
void ClosedLoopChecks(const Plant& plant, const ReferenceCase& rc,
                      const ControllerSpec& spec, Outcome& o) {
  std::vector<Trajectory> trajs;
  for (const Vec& x0 : rc.initial_conditions) {
    trajs.push_back(ClosedLoopSimulate(plant, spec, rc.model.net, x0, 30.0, 1e-3));
  }
  const double pairwise = MaxPairwiseTerminal(trajs);
  o.Require(pairwise <= 2.0 * spec.radius,
            "pairwise terminal " + Num(pairwise) + " <= 2r = " + Num(2.0 * spec.radius));
  const Vec x_star = EquilibriumOracle(ClosedLoopField(plant, spec, rc.model.net),
                                       trajs.front().states.back());
  double worst = 0.0;
  bool ok = true;
  for (const Trajectory& t : trajs) {
    const EnvelopeReport r = EnvelopeCheck(t, x_star, spec, rc.model.epsilon);
    worst = std::max(worst, r.worst_ratio);
    ok = ok && r.pass;
  }
  o.Require(ok, "envelope worst ratio " + Num(worst) + " about x* = [" +
                    Num(x_star(0)) + ", " + Num(x_star(1)) + "]");
}

Outcome Ac1() {
  Outcome o;
  const ReferenceCase p = PendulumReference(), v = VehicleReference();
  const auto t0 = Clock::now();
  const Mat h1 = p.Y * p.S.inverse();
  const Mat h2 = v.Y * v.S.inverse();
  const double dt = Seconds(t0);
  const double e1 = MaxAbsDiff(h1, p.H).maxCoeff(), e2 = MaxAbsDiff(h2, v.H).maxCoeff();
  o.Require(e1 <= 5e-4, "ex1 max |YS^-1 - H| = " + Num(e1));
  o.Require(e2 <= 5e-4, "ex2 max |YS^-1 - H| = " + Num(e2));
  o.Require(dt < 1e-3, "time " + Num(dt * 1e3) + " ms");
  return o;
}

Outcome Ac2() {
  Outcome o;
  const SingleLayerCoefficients k = SingleLayerCoefficientsFor(kPendulumSynthesisAlpha, 1.0);
  o.Require(std::abs(k.quadratic - 102850.0) <= 1.0,
            "quadratic " + Num(k.quadratic) + " vs printed 102850 +- 1");
  o.Require(std::abs(k.linear - 453.5455) <= 1e-3,
            "linear " + std::to_string(k.linear) + " vs printed 453.5455 +- 1e-3");
  return o;
}

Outcome Ac3() {
  Outcome o;
  const ReferenceCase rc = PendulumReference();
  SectorBounds b = PropagateSectorBounds(rc.model.net, rc.model.box);
  b.per_layer[0].alpha = kPendulumSynthesisAlpha;
  b.per_layer[0].beta = 1.0;
  const double s_low = SymEigBounds(rc.S).lambda_min;
  const double lam = SymEigBounds(CtrlConvexMatrix(rc.model, rc.g, b, rc.S, rc.Y, rc.mu,
                                                   s_low, CtrlForm::kSingleLayer))
                         .lambda_max;
  if (lam <= 1e-2) {
    o.Require(true, "printed (S, Y, mu) lambda_max " + Num(lam) + " <= 1e-2");
    return o;
  }
  const SynthesisResult& r = PendulumSynthesis().result;
  o.detail << "printed plug-in lambda_max " << Num(lam) << " > 1e-2, fallback; ";
  o.Require(r.status == SynthesisStatus::kOk && r.spec->mu <= 3 * rc.mu,
            "own mu " + (r.spec ? Num(r.spec->mu) : std::string("none")) +
                " <= 3 * 0.61168");
  return o;
}

Outcome Ac4() {
  Outcome o;
  const Synthesized& s = PendulumSynthesis();
  o.Require(s.result.status == SynthesisStatus::kOk, s.result.message);
  if (!s.result.spec) return o;
  const ControllerSpec& spec = *s.result.spec;
  o.Require(spec.radius <= 0.05, "radius " + Num(spec.radius) + " <= 0.05 (printed 0.0239)");
  o.Require(s.seconds < 60.0, "synthesis " + Num(s.seconds) + " s < 60 s");
  o.detail << "mu " << Num(spec.mu) << ", H = [" << Num(spec.H(0, 0)) << ", "
           << Num(spec.H(0, 1)) << "]; ";
  return o;
}

Outcome Ac5() {
  Outcome o;
  const SynthesisResult& r = PendulumSynthesis().result;
  o.Require(r.status == SynthesisStatus::kOk, "synthesis " + r.message);
  if (!r.spec) return o;
  const ReferenceCase rc = PendulumReference();
  PendulumParams pp;
  pp.unit_actuation = true;
  const Plant plant = PendulumPlant(pp);
  ClosedLoopChecks(plant, rc, *r.spec, o);
  Vec x0(2);
  x0 << 1.0, 1.0;
  const Trajectory free = Rk4Simulate(plant.drift, x0, 30.0, 1e-3);
  double late = 0.0;
  for (size_t k = free.states.size() / 2; k < free.states.size(); ++k)
    late = std::max(late, free.states[k].norm());
  o.Require(late / x0.norm() >= 0.9,
            "uncontrolled late max |x| / |x0| = " + Num(late / x0.norm()));
  return o;
}

Outcome Ac6() {
  Outcome o;
  const ReferenceCase rc = VehicleReference();
  const SectorBounds b = PropagateSectorBounds(rc.model.net, rc.model.box);
  const SynthesisResult r = Synthesize(rc.model, rc.g, b, SynthesisOptions{});
  o.Require(r.status == SynthesisStatus::kOk, "two-layer synthesis " + r.message);
  if (!r.spec) return o;
  o.Require(r.spec->form == std::string("two-layer-reduced"), "form " + r.spec->form);
  o.Require(r.spec->mu < 1e-6, "mu " + Num(r.spec->mu) + " < 1e-6 (printed 8.05e-15)");
  ClosedLoopChecks(VehiclePlant(), rc, *r.spec, o);
  const double e = MaxAbsDiff(rc.Y * rc.S.inverse(), rc.H).maxCoeff();
  o.Require(e <= 5e-4, "H identity " + Num(e));
  return o;
}

Outcome Ac7() {
  Outcome o;
  const ReferenceCase rc = PendulumReference();
  const CertifyResult r =
      Certify(rc.model, PropagateSectorBounds(rc.model.net, rc.model.box));
  o.Require(r.status == CertifyStatus::kInfeasible,
            std::string("certify status ") + ToString(r.status));
  const SynthesisResult& s = PendulumSynthesis().result;
  o.Require(s.status == SynthesisStatus::kOk, "routed to synthesis: " + s.message);
  return o;
}

// Random contracting toy for the certificate properties.
NodeModel ContractingToy(Rng& rng) {
  const int m = rng.Int(1, 3);
  Mat a = rng.Gaussian(m, m);
  a -= (a.eigenvalues().real().maxCoeff() + rng.Uniform(0.5, 2.0)) * Mat::Identity(m, m);
  NodeModel model;
  model.A = a;
  std::vector<int> dims = {m};
  const int k = rng.Int(1, 2);
  for (int i = 0; i < k; ++i) dims.push_back(rng.Int(1, 4));
  dims.push_back(m);
  model.net = rng.Net(dims, 0.3);
  model.box = testing::UnitBox(m, rng.Uniform(0.5, 2.0));
  return model;
}

std::vector<int> RandomDims(Rng& rng, int max_hidden_layers) {
  std::vector<int> dims = {rng.Int(1, 3)};
  const int k = rng.Int(1, max_hidden_layers);
  for (int i = 0; i < k; ++i) dims.push_back(rng.Int(1, 4));
  dims.push_back(dims[0]);
  return dims;
}

Outcome Ac8() {
  Outcome o;
  Rng rng(2024);
  const int cases = 100;

  double lemma_min = INFINITY;
  for (int c = 0; c < cases; ++c) {
    const std::vector<int> dims = RandomDims(rng, 3);
    const int k = static_cast<int>(dims.size()) - 2;
    const FeedforwardNet net = rng.Net(dims, 1.0);
    const Box box = testing::UnitBox(dims[0], rng.Uniform(0.2, 2.0));
    const Mat lemma = LemmaMatrix(BuildQMatrices(net, PropagateSectorBounds(net, box)));
    const auto a1 = ForwardWithActivations(net, rng.InBox(box)).activations;
    const auto a2 = ForwardWithActivations(net, rng.InBox(box)).activations;
    std::vector<double> v;
    for (int i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < a1[i].size(); ++j) v.push_back(a1[i](j) - a2[i](j));
    for (int i = 1; i <= k; ++i)
      for (Eigen::Index j = 0; j < a1[i].size(); ++j) v.push_back(a1[i](j) - a2[i](j));
    const Vec xi = Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    lemma_min = std::min(lemma_min, xi.dot(lemma * xi));
  }
  o.Require(lemma_min >= -1e-10, "lemma form min " + Num(lemma_min));

  int sector_violations = 0;
  for (int c = 0; c < cases; ++c) {
    const std::vector<int> dims = RandomDims(rng, 2);
    const int k = static_cast<int>(dims.size()) - 2;
    const FeedforwardNet net = rng.Net(dims, 1.2);
    Box box;
    for (int j = 0; j < dims[0]; ++j) {
      const double lo = rng.Uniform(-2, 1);
      box.emplace_back(lo, lo + rng.Uniform(0.1, 2));
    }
    const SectorBounds b = PropagateSectorBounds(net, box);
    for (int s = 0; s < 100000; ++s) {
      Vec w1 = rng.InBox(box), w2 = rng.InBox(box);
      for (int l = 0; l < k; ++l) {
        const Vec v1 = net.weights[l] * w1 + net.biases[l];
        const Vec v2 = net.weights[l] * w2 + net.biases[l];
        for (Eigen::Index i = 0; i < v1.size(); ++i) {
          const double dv = v1(i) - v2(i);
          if (std::abs(dv) < 1e-6) continue;
          const double slope = (std::tanh(v1(i)) - std::tanh(v2(i))) / dv;
          const SlopeBounds& nb = b.per_layer[l].per_neuron[i];
          if (slope < nb.alpha - 1e-9 || slope > nb.beta + 1e-9) ++sector_violations;
        }
        w1 = v1.array().tanh().matrix();
        w2 = v2.array().tanh().matrix();
      }
    }
  }
  o.Require(sector_violations == 0,
            "sector soundness violations " + std::to_string(sector_violations));

  double fd_worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    const std::vector<int> dims = RandomDims(rng, 3);
    FeedforwardNet net = rng.Net(dims, 1.0);
    Mat a = rng.Gaussian(dims[0], dims[0]);
    const Vec x = rng.GaussianVec(dims[0]), xdot = rng.GaussianVec(dims[0]);
    const ParameterGradient g = BackpropGrad(net, a, x, xdot);
    auto loss = [&]() { return 0.5 * (xdot - a * x - ForwardWithActivations(net, x).z).squaredNorm(); };
    std::vector<std::pair<double*, double>> slots;
    for (Eigen::Index i = 0; i < a.size(); ++i) slots.emplace_back(a.data() + i, g.dA.data()[i]);
    for (size_t l = 0; l < net.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < net.weights[l].size(); ++i)
        slots.emplace_back(net.weights[l].data() + i, g.dW[l].data()[i]);
      for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
        slots.emplace_back(net.biases[l].data() + i, g.dB[l].data()[i]);
    }
    Vec an(slots.size()), fd(slots.size());
    for (size_t s = 0; s < slots.size(); ++s) {
      const double keep = *slots[s].first;
      *slots[s].first = keep + 1e-6;
      const double up = loss();
      *slots[s].first = keep - 1e-6;
      const double down = loss();
      *slots[s].first = keep;
      fd(s) = (up - down) / 2e-6;
      an(s) = slots[s].second;
    }
    fd_worst = std::max(fd_worst, (an - fd).norm() / std::max(fd.norm(), 1e-12));
  }
  o.Require(fd_worst <= 1e-5, "backprop vs FD relative " + Num(fd_worst));

  double penrose = 0.0;
  for (int c = 0; c < cases; ++c) {
    const int rows = rng.Int(1, 6), cols = rng.Int(1, 6);
    const Mat m = rng.OfRank(rows, cols, rng.Int(1, std::min(rows, cols)));
    const Mat p = Pinv(m);
    const double s = 1.0 + m.norm() * p.norm();
    penrose = std::max({penrose, (m * p * m - m).norm() / s, (p * m * p - p).norm() / s,
                        ((m * p).transpose() - m * p).norm(),
                        ((p * m).transpose() - p * m).norm()});
  }
  o.Require(penrose <= 1e-9, "Penrose residual " + Num(penrose));

  int certified = 0, attempts = 0, decay_failures = 0;
  double plug_worst = -INFINITY;
  while (certified < cases && attempts < 4 * cases) {
    ++attempts;
    const NodeModel m = ContractingToy(rng);
    const SectorBounds b = PropagateSectorBounds(m.net, m.box);
    const CertifyResult r = Certify(m, b);
    if (r.status != CertifyStatus::kCertified) continue;
    ++certified;
    const ContractionCertificate& c = *r.certificate;
    plug_worst = std::max(
        plug_worst, SymEigBounds(AssembleCertNonconvex(m, b, c.P, c.gamma)).lambda_max);
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 7; ++i) {
      trajs.push_back(Rk4Simulate([&m](const Vec& x) { return m.Evaluate(x); },
                                  rng.InBox(m.box), 4.0, 1e-2, m.box));
    }
    if (!ContractionDecayTest(trajs, c.c(), c.rate()).pass) ++decay_failures;
  }
  o.Require(certified == cases, "certified toys " + std::to_string(certified));
  o.Require(plug_worst <= 1e-8, "convex -> non-convex lambda_max " + Num(plug_worst));
  o.Require(decay_failures == 0, "decay failures " + std::to_string(decay_failures));

  double cancel_excess = -INFINITY, ortho = 0.0;
  for (int c = 0; c < cases; ++c) {
    const int m = rng.Int(1, 4), l = rng.Int(1, m), n = rng.Int(1, 5);
    const Mat w = rng.Gaussian(m, n);
    const Mat g = rng.OfRank(m, l, rng.Int(1, l));
    const Cancellation can = MinNormCancellation(w, g);
    ortho = std::max(ortho, (g.transpose() * can.w_min).norm() / (1 + w.norm() * g.norm()));
    for (int k = 0; k < 10; ++k) {
      const Mat wu = rng.Gaussian(l, n) * rng.Uniform(0.1, 3.0);
      cancel_excess = std::max(cancel_excess, can.w_min.norm() - (w + g * wu).norm());
    }
  }
  o.Require(cancel_excess <= 1e-12, "cancellation excess " + Num(cancel_excess));
  o.Require(ortho <= 1e-10, "g^T W_min " + Num(ortho));
  return o;
}

Outcome Ac9() {
  Outcome o;
  const PipelineConfig cfg = ConfigFromJson(ReproConfigJson("ex1"));
  const Plant plant = MakePlant(cfg.plant);
  const Dataset train = SampleDataset(plant, cfg.n_train, cfg.data_seed);
  Dataset validation = GridDataset(plant, cfg.validation_grid);
  const Dataset extra = SampleDataset(plant, cfg.n_validation, cfg.data_seed + 1);
  validation.states.insert(validation.states.end(), extra.states.begin(), extra.states.end());
  validation.derivatives.insert(validation.derivatives.end(), extra.derivatives.begin(),
                                extra.derivatives.end());
  std::vector<int> dims = {2};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(2);
  o.Require(dims == std::vector<int>{2, 5, 2}, "architecture 2-5-2");
  o.Require(cfg.training.epochs <= 5000, "epochs " + std::to_string(cfg.training.epochs));
  const auto t0 = Clock::now();
  const TrainResult r = TrainNode(train, dims, cfg.training);
  const double max_res = Residuals(r.model, validation).max_norm;
  o.Require(max_res <= 0.01, "max validation residual " + Num(max_res) + " <= 0.01 over " +
                                 std::to_string(validation.size()) + " states");
  o.detail << "trained in " << Num(Seconds(t0)) << " s; ";
  return o;
}

Outcome Ac10() {
  Outcome o;
  // A = diag(-1, -2), Q = I: the Lyapunov solution is diag(1/2, 1/4).
  Mat a(2, 2);
  a << -1, 0, 0, -2;
  LmiProblem p;
  p.AddSymmetric("P", 2);
  p.AddConstraint("lyapunov", [a](const Assignment& x) -> Mat {
    const Mat& pm = x.Get("P");
    return a.transpose() * pm + pm * a + Mat::Identity(2, 2);
  });
  p.SetObjective([](const Assignment& x) { return x.Get("P").trace(); });
  const LmiSolution s = Solve(p);
  o.Require(s.status == LmiStatus::kFeasible, "Lyapunov toy status " + std::string(ToString(s.status)));
  if (s.status == LmiStatus::kFeasible) {
    Mat closed = Mat::Zero(2, 2);
    closed(0, 0) = 0.5;
    closed(1, 1) = 0.25;
    const double err = (s.assignment.Get("P") - closed).norm();
    o.Require(err <= 1e-4, "|P - diag(1/2, 1/4)| = " + Num(err));
    o.Require(CheckSolution(p, s.assignment, 0.0).pass, "plug-in check");
  }

  Rng rng(10);
  int infeasible_missed = 0;
  double order_gap = 0.0;
  for (int c = 0; c < 100; ++c) {
    const int n = rng.Int(1, 3);
    Mat h = rng.Gaussian(n, n);
    h -= (h.eigenvalues().real().maxCoeff() + rng.Uniform(0.3, 1.5)) * Mat::Identity(n, n);
    LmiProblem bad;
    bad.AddSymmetric("P", n);
    const Mat unstable = -h;
    bad.AddConstraint("decay", [unstable](const Assignment& x) -> Mat {
      return unstable.transpose() * x.Get("P") + x.Get("P") * unstable;
    });
    bad.AddConstraint("lower", [n](const Assignment& x) -> Mat {
      return Mat::Identity(n, n) - x.Get("P");
    });
    if (Solve(bad).status != LmiStatus::kInfeasible) ++infeasible_missed;

    auto build = [h, n](bool flip) {
      LmiProblem q;
      if (flip) q.AddScalar("t");
      q.AddSymmetric("P", n);
      if (!flip) q.AddScalar("t");
      std::vector<std::pair<std::string, AffineMatrixFn>> cons = {
          {"decay", [h, n](const Assignment& x) -> Mat {
             return h.transpose() * x.Get("P") + x.Get("P") * h + Mat::Identity(n, n);
           }},
          {"lower", [n](const Assignment& x) -> Mat { return Mat::Identity(n, n) - x.Get("P"); }},
          {"upper", [n](const Assignment& x) -> Mat {
             return x.Get("P") - x.Scalar("t") * Mat::Identity(n, n);
           }}};
      if (flip) std::reverse(cons.begin(), cons.end());
      for (auto& [name, fn] : cons) q.AddConstraint(name, fn);
      q.SetObjective([](const Assignment& x) { return x.Scalar("t"); });
      return q;
    };
    const LmiSolution s1 = Solve(build(false)), s2 = Solve(build(true));
    if (s1.status != LmiStatus::kFeasible || s2.status != LmiStatus::kFeasible) {
      order_gap = INFINITY;
      continue;
    }
    order_gap = std::max(order_gap, std::abs(s1.objective_value - s2.objective_value) /
                                        (1.0 + std::abs(s1.objective_value)));
  }
  o.Require(infeasible_missed == 0,
            "unstable toys not reported infeasible: " + std::to_string(infeasible_missed));
  o.Require(order_gap <= 1e-8, "declaration-order objective gap " + Num(order_gap));
  return o;
}

}  // namespace
}  // namespace nodectl

int main() {
  using nodectl::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AC1", nodectl::Ac1}, {"AC2", nodectl::Ac2}, {"AC3", nodectl::Ac3},
      {"AC4", nodectl::Ac4}, {"AC5", nodectl::Ac5}, {"AC6", nodectl::Ac6},
      {"AC7", nodectl::Ac7}, {"AC8", nodectl::Ac8}, {"AC9", nodectl::Ac9},
      {"AC10", nodectl::Ac10}};
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failed += !o.pass;
    std::cout << name << " " << (o.pass ? "PASS" : "FAIL") << " " << o.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria pass"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
