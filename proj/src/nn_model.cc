#include "nodectl/nn_model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace nodectl {

void FeedforwardNet::Validate() const {
  if (weights.size() < 2) {
    throw DimensionError("FeedforwardNet: need at least one hidden layer");
  }
  if (dims.size() != weights.size() + 1 || biases.size() != weights.size()) {
    throw DimensionError("FeedforwardNet: dims/weights/biases count mismatch");
  }
  if (dims.front() != dims.back()) {
    throw DimensionError("FeedforwardNet: output dim must equal input dim");
  }
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rows() != dims[i + 1] || weights[i].cols() != dims[i] ||
        biases[i].size() != dims[i + 1]) {
      std::ostringstream os;
      os << "FeedforwardNet: layer " << i + 1 << " expects W " << dims[i + 1]
         << "x" << dims[i] << ", got " << weights[i].rows() << "x"
         << weights[i].cols();
      throw DimensionError(os.str());
    }
    if (!weights[i].allFinite() || !biases[i].allFinite()) {
      throw DimensionError("FeedforwardNet: non-finite parameter");
    }
  }
}

FeedforwardNet FeedforwardNet::Zeros(const std::vector<int>& dims) {
  if (dims.size() < 3) {
    throw DimensionError("FeedforwardNet: need at least one hidden layer");
  }
  FeedforwardNet net;
  net.dims = dims;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    net.weights.push_back(Mat::Zero(dims[i + 1], dims[i]));
    net.biases.push_back(Vec::Zero(dims[i + 1]));
  }
  return net;
}

void NodeModel::Validate() const {
  net.Validate();
  if (A.rows() != A.cols() || A.rows() != net.input_dim()) {
    throw DimensionError("NodeModel: A must be square with side m_0");
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw DimensionError("NodeModel: epsilon must be finite and nonnegative");
  }
  if (!box.empty() && static_cast<int>(box.size()) != A.rows()) {
    throw DimensionError("NodeModel: box dimension mismatch");
  }
}

Vec NodeModel::Evaluate(const Vec& x) const {
  return A * x + ForwardWithActivations(net, x).z;
}

ForwardResult ForwardWithActivations(const FeedforwardNet& net, const Vec& x) {
  if (x.size() != net.input_dim()) {
    throw DimensionError("ForwardWithActivations: input dimension mismatch");
  }
  ForwardResult out;
  const size_t k = net.weights.size() - 1;
  out.activations.reserve(k + 1);
  out.activations.push_back(x);
  for (size_t i = 0; i < k; ++i) {
    Vec v = net.weights[i] * out.activations.back() + net.biases[i];
    out.activations.push_back(v.array().tanh().matrix());
  }
  out.z = net.weights[k] * out.activations.back() + net.biases[k];
  return out;
}

ParameterGradient ParameterGradient::ZerosLike(const Mat& a,
                                               const FeedforwardNet& net) {
  ParameterGradient g;
  g.dA = Mat::Zero(a.rows(), a.cols());
  for (size_t i = 0; i < net.weights.size(); ++i) {
    g.dW.push_back(Mat::Zero(net.weights[i].rows(), net.weights[i].cols()));
    g.dB.push_back(Vec::Zero(net.biases[i].size()));
  }
  return g;
}

void ParameterGradient::Add(const ParameterGradient& other, double scale) {
  dA += scale * other.dA;
  for (size_t i = 0; i < dW.size(); ++i) {
    dW[i] += scale * other.dW[i];
    dB[i] += scale * other.dB[i];
  }
}

namespace {

// Accumulates scale * gradient of one sample into `acc`; returns |r|^2.
double AccumulateSample(const FeedforwardNet& net, const Mat& a, const Vec& x,
                        const Vec& xdot, double scale, ParameterGradient& acc) {
  const ForwardResult fwd = ForwardWithActivations(net, x);
  const Vec r = xdot - a * x - fwd.z;
  // d(1/2 |r|^2)/dZ = -r.
  Vec delta = -r;
  acc.dA.noalias() += scale * delta * x.transpose();
  const size_t k = net.weights.size() - 1;
  acc.dW[k].noalias() += scale * delta * fwd.activations[k].transpose();
  acc.dB[k] += scale * delta;
  for (size_t layer = k; layer-- > 0;) {
    const Vec& w = fwd.activations[layer + 1];
    Vec back = net.weights[layer + 1].transpose() * delta;
    delta = back.array() * (1.0 - w.array().square());
    acc.dW[layer].noalias() +=
        scale * delta * fwd.activations[layer].transpose();
    acc.dB[layer] += scale * delta;
  }
  return r.squaredNorm();
}

}  // namespace

ParameterGradient BackpropGrad(const FeedforwardNet& net, const Mat& a,
                               const Vec& x, const Vec& xdot) {
  net.Validate();
  if (a.rows() != net.output_dim() || a.cols() != net.input_dim() ||
      x.size() != net.input_dim() || xdot.size() != net.output_dim()) {
    throw DimensionError("BackpropGrad: shape mismatch");
  }
  ParameterGradient g = ParameterGradient::ZerosLike(a, net);
  AccumulateSample(net, a, x, xdot, 1.0, g);
  return g;
}

namespace {

Mat GlorotUniform(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat w(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) w(i, j) = dist(rng);
  }
  return w;
}

std::vector<double*> Slots(Mat& a, FeedforwardNet& net) {
  std::vector<double*> out;
  auto push = [&](double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(p + i);
  };
  push(a.data(), a.size());
  for (size_t i = 0; i < net.weights.size(); ++i) {
    push(net.weights[i].data(), net.weights[i].size());
    push(net.biases[i].data(), net.biases[i].size());
  }
  return out;
}

std::vector<double> Flatten(const ParameterGradient& g) {
  std::vector<double> out(g.dA.data(), g.dA.data() + g.dA.size());
  for (size_t i = 0; i < g.dW.size(); ++i) {
    out.insert(out.end(), g.dW[i].data(), g.dW[i].data() + g.dW[i].size());
    out.insert(out.end(), g.dB[i].data(), g.dB[i].data() + g.dB[i].size());
  }
  return out;
}

}  // namespace

TrainResult TrainNode(const Dataset& data, const std::vector<int>& dims,
                      const TrainOptions& options) {
  if (data.size() == 0) throw std::invalid_argument("TrainNode: empty dataset");
  if (data.derivatives.size() != data.states.size()) {
    throw DimensionError("TrainNode: states/derivatives length mismatch");
  }
  if (dims.size() < 3 || dims.front() != data.states[0].size() ||
      dims.back() != data.states[0].size()) {
    throw DimensionError("TrainNode: architecture must map R^m to R^m");
  }
  if (options.batch_size < 1 || options.epochs < 0) {
    throw std::invalid_argument("TrainNode: invalid hyperparameters");
  }

  std::mt19937_64 rng(options.seed);
  TrainResult result;
  NodeModel& model = result.model;
  const int m = dims.front();
  model.A = Mat::Zero(m, m);
  model.box = data.box;
  model.net.dims = dims;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    model.net.weights.push_back(GlorotUniform(dims[i + 1], dims[i], rng));
    model.net.biases.push_back(Vec::Zero(dims[i + 1]));
  }

  std::vector<double*> slots = Slots(model.A, model.net);
  std::vector<double> velocity(slots.size(), 0.0);
  std::vector<double> second(slots.size(), 0.0);
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  long adam_step = 0;

  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = static_cast<size_t>(options.batch_size);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double step = options.step_size;
    if (options.final_step_fraction != 1.0 && options.epochs > 1) {
      const double progress = static_cast<double>(epoch) / (options.epochs - 1);
      const double f = options.final_step_fraction;
      step *= f + (1.0 - f) * 0.5 * (1.0 + std::cos(M_PI * progress));
    }
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t stop = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(stop - start);
      ParameterGradient grad = ParameterGradient::ZerosLike(model.A, model.net);
      for (size_t s = start; s < stop; ++s) {
        const size_t idx = order[s];
        epoch_loss += AccumulateSample(model.net, model.A, data.states[idx],
                                       data.derivatives[idx], scale, grad);
      }
      // Gradient of the mean squared residual is twice that of 1/2 |r|^2.
      const std::vector<double> flat = Flatten(grad);
      if (options.optimizer == Optimizer::kMomentum) {
        for (size_t p = 0; p < slots.size(); ++p) {
          velocity[p] = options.momentum * velocity[p] - step * 2.0 * flat[p];
          *slots[p] += velocity[p];
        }
      } else {
        ++adam_step;
        const double c1 = 1.0 - std::pow(options.momentum, adam_step);
        const double c2 = 1.0 - std::pow(kBeta2, adam_step);
        for (size_t p = 0; p < slots.size(); ++p) {
          const double gp = 2.0 * flat[p];
          velocity[p] = options.momentum * velocity[p] +
                        (1.0 - options.momentum) * gp;
          second[p] = kBeta2 * second[p] + (1.0 - kBeta2) * gp * gp;
          *slots[p] -= step * (velocity[p] / c1) /
                       (std::sqrt(second[p] / c2) + kAdamEps);
        }
      }
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) {
      std::ostringstream os;
      os << "TrainNode: loss diverged at epoch " << epoch;
      throw TrainingDiverged(epoch, os.str());
    }
    result.loss_history.push_back(epoch_loss);
  }
  return result;
}

ResidualStats Residuals(const NodeModel& model, const Dataset& data) {
  ResidualStats stats;
  if (data.size() == 0) return stats;
  for (size_t i = 0; i < data.size(); ++i) {
    const double n = (data.derivatives[i] - model.Evaluate(data.states[i])).norm();
    stats.max_norm = std::max(stats.max_norm, n);
    stats.mean_norm += n;
    stats.mean_squared += n * n;
  }
  stats.mean_norm /= static_cast<double>(data.size());
  stats.mean_squared /= static_cast<double>(data.size());
  return stats;
}

double ErrorBound(NodeModel& model, const Dataset& validation, double margin) {
  if (validation.size() == 0) {
    throw std::invalid_argument("ErrorBound: empty validation set");
  }
  if (!(margin >= 1.0)) throw std::invalid_argument("ErrorBound: margin < 1");
  if (!model.box.empty()) {
    for (const Vec& x : validation.states) {
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const Interval& iv = model.box[static_cast<size_t>(i)];
        const double slack = 1e-12 * std::max(1.0, std::abs(x(i)));
        if (x(i) < iv.lo - slack || x(i) > iv.hi + slack) {
          throw std::invalid_argument(
              "ErrorBound: validation sample outside the model box");
        }
      }
    }
  }
  model.epsilon = margin * Residuals(model, validation).max_norm;
  return model.epsilon;
}

}  // namespace nodectl
