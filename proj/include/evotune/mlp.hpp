#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "evotune/errors.hpp"
#include "evotune/kpca.hpp"

namespace evotune {

enum class Activation { relu, tanh, logistic };
enum class Solver { adam, sgd };

std::string_view to_string(Activation a);
std::string_view to_string(Solver s);
Activation parse_activation(std::string_view text);
Solver parse_solver(std::string_view text);

struct MlpConfig {
  std::vector<int> hidden_layers{100};
  Activation activation = Activation::relu;
  double learning_rate_init = 0.001;
  Solver solver = Solver::adam;
  int max_iter = 500;
  int batch_size = 0;  // 0: min(200, n_train)
  std::uint64_t seed = 0;
  // Stop once the epoch loss improves by less than tol for n_iter_no_change
  // epochs in a row. 0 disables the check and runs all max_iter epochs.
  double tol = 0.0;
  int n_iter_no_change = 10;

  static constexpr double adam_beta1 = 0.9;
  static constexpr double adam_beta2 = 0.999;
  static constexpr double adam_epsilon = 1e-8;
  static constexpr double sgd_momentum = 0.9;
};

class TrainingDiverged : public NumericalError {
 public:
  explicit TrainingDiverged(int epoch)
      : NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

template <typename Scalar>
struct MlpModel {
  std::vector<MatrixX<Scalar>> weights;  // layer l: fan_in x fan_out
  std::vector<RowVectorX<Scalar>> biases;
  Activation activation = Activation::relu;
  int class_count = 0;
  std::vector<Scalar> train_loss_curve;

  Eigen::Index input_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  std::size_t layer_count() const { return weights.size(); }
};

template <typename Scalar>
struct MlpGradients {
  std::vector<MatrixX<Scalar>> weights;
  std::vector<RowVectorX<Scalar>> biases;
  Scalar loss = 0;
};

namespace detail {

template <typename Scalar>
void activate(Activation a, MatrixX<Scalar>& z) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(Scalar(0)); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::logistic: z = (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix(); break;
  }
}

// Multiplies `delta` in place by the activation derivative, expressed through
// the activated output.
template <typename Scalar>
void activation_backward(Activation a, const MatrixX<Scalar>& out, MatrixX<Scalar>& delta) {
  switch (a) {
    case Activation::relu: delta = (out.array() > Scalar(0)).select(delta, Scalar(0)); break;
    case Activation::tanh: delta.array() *= Scalar(1) - out.array().square(); break;
    case Activation::logistic: delta.array() *= out.array() * (Scalar(1) - out.array()); break;
  }
}

// Row-wise log-sum-exp and in-place softmax of logits.
template <typename Scalar>
VectorX<Scalar> softmax_inplace(MatrixX<Scalar>& logits) {
  const VectorX<Scalar> row_max = logits.rowwise().maxCoeff();
  logits.colwise() -= row_max;
  logits = logits.array().exp().matrix();
  const VectorX<Scalar> sums = logits.rowwise().sum();
  logits.array().colwise() /= sums.array();
  return (row_max.array() + sums.array().log()).matrix();
}

}  // namespace detail

/// Glorot-uniform weights, zero biases.
template <typename Scalar = double>
MlpModel<Scalar> init_weights(const MlpConfig& config, Eigen::Index input_dim, int class_count) {
  if (input_dim < 1) throw InvalidInput("mlp: input_dim must be >= 1");
  if (class_count < 2) throw InvalidInput("mlp: need at least 2 classes");
  for (int h : config.hidden_layers) {
    if (h < 1) throw InvalidInput("mlp: hidden layer sizes must be positive");
  }
  MlpModel<Scalar> model;
  model.activation = config.activation;
  model.class_count = class_count;

  std::vector<Eigen::Index> dims{input_dim};
  for (int h : config.hidden_layers) dims.push_back(h);
  dims.push_back(class_count);

  std::mt19937_64 rng(config.seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatrixX<Scalar> w(dims[l], dims[l + 1]);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(dist(rng));
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(RowVectorX<Scalar>::Zero(dims[l + 1]));
  }
  return model;
}

/// Class probabilities for every row of `x`.
template <typename Scalar, typename Derived>
MatrixX<Scalar> predict_proba(const MlpModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() != model.input_dim()) throw InvalidInput("mlp: input dimension mismatch");
  if (!x.allFinite()) throw InvalidInput("mlp: non-finite input");
  MatrixX<Scalar> a = x.template cast<Scalar>();
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    MatrixX<Scalar> z = a * model.weights[l];
    z.rowwise() += model.biases[l];
    if (l + 1 < model.layer_count()) detail::activate(model.activation, z);
    a = std::move(z);
  }
  detail::softmax_inplace(a);
  return a;
}

/// Probability vector for a single sample.
template <typename Scalar, typename Derived>
VectorX<Scalar> forward(const MlpModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  return predict_proba(model, x.derived().reshaped().transpose()).row(0).transpose();
}

/// Arg-max class per row; ties go to the lower class index.
template <typename Scalar, typename Derived>
Eigen::VectorXi predict(const MlpModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  const MatrixX<Scalar> p = predict_proba(model, x);
  Eigen::VectorXi out(p.rows());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.cols(); ++c) {
      if (p(r, c) > p(r, best)) best = c;
    }
    out(r) = static_cast<int>(best);
  }
  return out;
}

/// Gradients of the mean cross-entropy over the batch.
template <typename Scalar, typename DerivedX>
MlpGradients<Scalar> backprop_grads(const MlpModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& batch_x,
                                    const Eigen::Ref<const Eigen::VectorXi>& batch_y) {
  const Eigen::Index n = batch_x.rows();
  if (n == 0) throw InvalidInput("backprop: empty batch");
  if (batch_y.size() != n) throw InvalidInput("backprop: label count mismatch");
  const std::size_t layers = model.layer_count();

  // activations[0] is the input; activations[l + 1] the output of layer l
  std::vector<MatrixX<Scalar>> activations;
  activations.reserve(layers + 1);
  activations.push_back(batch_x.template cast<Scalar>());
  for (std::size_t l = 0; l < layers; ++l) {
    MatrixX<Scalar> z = activations.back() * model.weights[l];
    z.rowwise() += model.biases[l];
    if (l + 1 < layers) detail::activate(model.activation, z);
    activations.push_back(std::move(z));
  }
  MatrixX<Scalar>& probs = activations.back();
  MatrixX<Scalar> logits = probs;
  const VectorX<Scalar> lse = detail::softmax_inplace(probs);

  MlpGradients<Scalar> g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  Scalar loss = 0;
  for (Eigen::Index r = 0; r < n; ++r) loss += lse(r) - logits(r, batch_y(r));
  g.loss = loss / static_cast<Scalar>(n);

  MatrixX<Scalar> delta = probs;
  for (Eigen::Index r = 0; r < n; ++r) delta(r, batch_y(r)) -= Scalar(1);
  delta /= static_cast<Scalar>(n);
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l].noalias() = activations[l].transpose() * delta;
    g.biases[l] = delta.colwise().sum();
    if (l == 0) break;
    MatrixX<Scalar> prev = delta * model.weights[l].transpose();
    detail::activation_backward(model.activation, activations[l], prev);
    delta = std::move(prev);
  }
  return g;
}

/// Mean cross-entropy of the model on (x, y).
template <typename Scalar, typename Derived>
Scalar cross_entropy(const MlpModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x,
                     const Eigen::Ref<const Eigen::VectorXi>& y) {
  const MatrixX<Scalar> p = predict_proba(model, x);
  Scalar loss = 0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) loss -= std::log(p(r, y(r)));
  return loss / static_cast<Scalar>(p.rows());
}

/// Mini-batch training for exactly config.max_iter epochs (unless tol is set).
/// Throws TrainingDiverged when an epoch loss is not finite.
template <typename Scalar = double, typename Derived>
MlpModel<Scalar> train(const MlpConfig& config, const Eigen::MatrixBase<Derived>& x_train,
                       const Eigen::Ref<const Eigen::VectorXi>& y_train, int class_count = 0) {
  const Eigen::Index n = x_train.rows();
  if (n == 0 || y_train.size() != n) throw InvalidInput("mlp train: empty or mismatched training data");
  if (config.max_iter < 1) throw InvalidInput("mlp train: max_iter must be >= 1");
  if (!(config.learning_rate_init > 0)) throw InvalidInput("mlp train: learning rate must be positive");
  if (y_train.minCoeff() < 0) throw InvalidInput("mlp train: negative label");
  if (class_count == 0) class_count = y_train.maxCoeff() + 1;
  if (y_train.maxCoeff() >= class_count) throw InvalidInput("mlp train: label out of range");
  if (y_train.minCoeff() == y_train.maxCoeff()) throw InvalidInput("mlp train: need at least 2 classes present");

  MlpModel<Scalar> model = init_weights<Scalar>(config, x_train.cols(), class_count);
  const MatrixX<Scalar> x = x_train.template cast<Scalar>();
  const Eigen::Index batch = config.batch_size > 0 ? std::min<Eigen::Index>(config.batch_size, n)
                                                   : std::min<Eigen::Index>(200, n);
  const Scalar lr = static_cast<Scalar>(config.learning_rate_init);
  const std::size_t layers = model.layer_count();

  // first/second moments for adam, velocity for sgd (first only)
  std::vector<MatrixX<Scalar>> mw, vw;
  std::vector<RowVectorX<Scalar>> mb, vb;
  for (std::size_t l = 0; l < layers; ++l) {
    mw.push_back(MatrixX<Scalar>::Zero(model.weights[l].rows(), model.weights[l].cols()));
    vw.push_back(mw.back());
    mb.push_back(RowVectorX<Scalar>::Zero(model.biases[l].size()));
    vb.push_back(mb.back());
  }

  // a separate stream from the one used for initialisation
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  MatrixX<Scalar> xb;
  Eigen::VectorXi yb;
  long step = 0;
  Scalar best_loss = std::numeric_limits<Scalar>::infinity();
  int stalled = 0;

  const Scalar b1 = Scalar(MlpConfig::adam_beta1), b2 = Scalar(MlpConfig::adam_beta2);
  const Scalar eps = Scalar(MlpConfig::adam_epsilon), mom = Scalar(MlpConfig::sgd_momentum);

  for (int epoch = 1; epoch <= config.max_iter; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    Scalar epoch_loss = 0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index len = std::min(batch, n - start);
      xb.resize(len, x.cols());
      yb.resize(len);
      for (Eigen::Index i = 0; i < len; ++i) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = x.row(src);
        yb(i) = y_train(src);
      }
      const MlpGradients<Scalar> g = backprop_grads(model, xb, yb);
      epoch_loss += g.loss * static_cast<Scalar>(len);
      ++step;
      if (config.solver == Solver::adam) {
        const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(step));
        const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(step));
        const Scalar step_size = lr * std::sqrt(c2) / c1;
        for (std::size_t l = 0; l < layers; ++l) {
          mw[l] = b1 * mw[l] + (1 - b1) * g.weights[l];
          vw[l] = b2 * vw[l] + (1 - b2) * g.weights[l].cwiseAbs2();
          model.weights[l].array() -= step_size * mw[l].array() / (vw[l].array().sqrt() + eps);
          mb[l] = b1 * mb[l] + (1 - b1) * g.biases[l];
          vb[l] = b2 * vb[l] + (1 - b2) * g.biases[l].cwiseAbs2();
          model.biases[l].array() -= step_size * mb[l].array() / (vb[l].array().sqrt() + eps);
        }
      } else {
        for (std::size_t l = 0; l < layers; ++l) {
          mw[l] = mom * mw[l] - lr * g.weights[l];
          model.weights[l] += mw[l];
          mb[l] = mom * mb[l] - lr * g.biases[l];
          model.biases[l] += mb[l];
        }
      }
    }
    epoch_loss /= static_cast<Scalar>(n);
    if (!std::isfinite(epoch_loss)) throw TrainingDiverged(epoch);
    model.train_loss_curve.push_back(epoch_loss);

    if (config.tol > 0) {
      if (epoch_loss > best_loss - static_cast<Scalar>(config.tol)) {
        if (++stalled >= config.n_iter_no_change) break;
      } else {
        stalled = 0;
      }
      best_loss = std::min(best_loss, epoch_loss);
    }
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (!model.weights[l].allFinite() || !model.biases[l].allFinite()) {
      throw TrainingDiverged(static_cast<int>(model.train_loss_curve.size()));
    }
  }
  return model;
}

}  // namespace evotune
