#pragma once

// Linear-plus-tanh-network drift model  xdot = A x + Z(x),
//   w^0 = x,  w^{i+1} = tanh(W^{i+1} w^i + b^{i+1}),  Z(x) = W^{k+1} w^k + b^{k+1},
// together with its trainer and residual bound.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nodectl/interval.h"
#include "nodectl/numerics.h"

namespace nodectl {

/// tanh feedforward network. `weights[i]` maps layer i to layer i+1; the last
/// entry is the linear output layer. Hidden-layer count k = weights.size()-1.
struct FeedforwardNet {
  std::vector<int> dims;  // m_0 .. m_{k+1}
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  int hidden_layers() const { return static_cast<int>(weights.size()) - 1; }
  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }

  /// Checks the shape chain; throws DimensionError.
  void Validate() const;

  /// Zero-initialized network with the given dims.
  static FeedforwardNet Zeros(const std::vector<int>& dims);
};

struct NodeModel {
  Mat A;
  FeedforwardNet net;
  double epsilon = 0.0;  // sup-norm residual bound, units of xdot
  Box box;

  int state_dim() const { return static_cast<int>(A.rows()); }
  void Validate() const;
  /// A x + Z(x).
  Vec Evaluate(const Vec& x) const;
};

struct Dataset {
  std::vector<Vec> states;
  std::vector<Vec> derivatives;
  Box box;

  size_t size() const { return states.size(); }
};

struct ForwardResult {
  Vec z;
  std::vector<Vec> activations;  // w^0 .. w^k
};

ForwardResult ForwardWithActivations(const FeedforwardNet& net, const Vec& x);

/// Gradient of 1/2 |xdot - A x - Z(x)|^2 with respect to every parameter.
struct ParameterGradient {
  Mat dA;
  std::vector<Mat> dW;
  std::vector<Vec> dB;

  static ParameterGradient ZerosLike(const Mat& a, const FeedforwardNet& net);
  void Add(const ParameterGradient& other, double scale = 1.0);
};

ParameterGradient BackpropGrad(const FeedforwardNet& net, const Mat& a,
                               const Vec& x, const Vec& xdot);

enum class Optimizer { kMomentum, kAdam };

struct TrainOptions {
  int epochs = 5000;
  double step_size = 1e-2;
  double momentum = 0.9;
  int batch_size = 64;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::kMomentum;
  /// Step size multiplier reached at the final epoch (cosine schedule);
  /// 1 keeps the step constant.
  double final_step_fraction = 1.0;
};

struct TrainResult {
  NodeModel model;                  // epsilon left at 0
  std::vector<double> loss_history; // mean squared residual per epoch
};

/// Thrown when the training loss becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, const std::string& msg)
      : std::runtime_error(msg), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Mini-batch first-order training of (A, W, b) on the mean squared
/// residual. Deterministic for a fixed seed.
TrainResult TrainNode(const Dataset& data, const std::vector<int>& dims,
                      const TrainOptions& options);

struct ResidualStats {
  double max_norm = 0.0;       // max_k |r_k|
  double mean_norm = 0.0;      // (1/N) sum |r_k|
  double mean_squared = 0.0;   // (1/N) sum |r_k|^2
};

ResidualStats Residuals(const NodeModel& model, const Dataset& data);

/// margin * max over the validation set of |xdot - A x - Z(x)|. Stores the
/// result into model.epsilon and returns it.
double ErrorBound(NodeModel& model, const Dataset& validation,
                  double margin = 1.25);

}  // namespace nodectl
