#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gramevo/dataset.hpp"
#include "gramevo/phenotype.hpp"
#include "gramevo/rng.hpp"

namespace gramevo {

// ---------------------------------------------------------------------------
// Desk-scale dense network trainer: a multilayer perceptron with linear,
// relu or sigmoid hidden activations and a softmax output, trained by
// mini-batch gradient descent with classical momentum on the categorical
// cross-entropy. Everything is plain double loops in a fixed order, so a
// given (spec, seed, data) triple always produces the same weights.
// ---------------------------------------------------------------------------

enum class Activation { Linear, Relu, Sigmoid, Softmax };

struct DenseLayerSpec {
  int units = 1;
  Activation act = Activation::Linear;
  bool bias = true;
};

struct DenseNetSpec {
  int input_dim = 0;
  std::vector<DenseLayerSpec> layers;  // last layer must be Softmax
};

class ArityMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Translates a descriptor into a trainer spec. Returns an empty optional
// with a reason when the descriptor asks for anything the trainer does not
// support; that maps to an invalid (fitness 0) evaluation, not an exception.
struct DenseBuildResult {
  bool ok = false;
  DenseNetSpec spec;
  std::string reason;
};

inline DenseBuildResult build_dense_spec(const NetworkDescriptor& nd, int input_dim) {
  DenseBuildResult out;
  if (nd.layers.empty()) {
    out.reason = "descriptor has no layers";
    return out;
  }
  if (!nd.learning.empty() && nd.learning.front().first == "learning" &&
      nd.learning.front().second != "gradient-descent") {
    out.reason = "unsupported learning algorithm: " + nd.learning.front().second;
    return out;
  }
  out.spec.input_dim = input_dim;
  for (std::size_t i = 0; i < nd.layers.size(); ++i) {
    const auto& layer = nd.layers[i];
    if (layer.kind != "fc") {
      out.reason = "unsupported layer kind: " + (layer.kind.empty() ? "(none)" : layer.kind);
      return out;
    }
    DenseLayerSpec spec;
    const std::string* units = layer.attr("num-units");
    long long parsed = 0;
    if (!units || !parse_long(*units, parsed) || parsed < 1) {
      out.reason = "dense layer has no usable num-units";
      return out;
    }
    spec.units = static_cast<int>(parsed);

    const std::string* act = layer.attr("act");
    if (!act) {
      out.reason = "dense layer has no activation";
      return out;
    }
    bool last = i + 1 == nd.layers.size();
    if (*act == "linear") spec.act = Activation::Linear;
    else if (*act == "relu") spec.act = Activation::Relu;
    else if (*act == "sigmoid") spec.act = Activation::Sigmoid;
    else if (*act == "softmax" && last) spec.act = Activation::Softmax;
    else {
      out.reason = "unsupported activation: " + *act;
      return out;
    }
    if (const std::string* bias = layer.attr("bias")) {
      if (*bias == "True") spec.bias = true;
      else if (*bias == "False") spec.bias = false;
      else {
        out.reason = "bad bias flag: " + *bias;
        return out;
      }
    }
    out.spec.layers.push_back(spec);
  }
  if (out.spec.layers.back().act != Activation::Softmax) {
    out.reason = "network has no softmax output layer";
    return out;
  }
  out.ok = true;
  return out;
}

class DenseModel {
 public:
  struct Layer {
    int in = 0, out = 0;
    Activation act = Activation::Linear;
    bool bias = true;
    std::vector<double> w;  // row-major [out][in]
    std::vector<double> b;  // empty when bias is disabled
  };

  DenseModel() = default;

  // Glorot-style uniform initialization, U(-r, r) with r = sqrt(6/(fan_in +
  // fan_out)); biases start at zero.
  DenseModel(const DenseNetSpec& spec, std::uint64_t init_seed) {
    int in = spec.input_dim;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      Layer layer;
      layer.in = in;
      layer.out = spec.layers[l].units;
      layer.act = spec.layers[l].act;
      layer.bias = spec.layers[l].bias;
      layer.w.resize(static_cast<std::size_t>(layer.out) * layer.in);
      double r = std::sqrt(6.0 / (layer.in + layer.out));
      RandomStream rng = RandomStream::derive(init_seed, "glorot", l);
      for (double& w : layer.w) w = rng.uniform_real(-r, r);
      if (layer.bias) layer.b.assign(layer.out, 0.0);
      layers_.push_back(std::move(layer));
      in = layer.out;
    }
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  int input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  int output_arity() const { return layers_.empty() ? 0 : layers_.back().out; }

  // Forward pass to the softmax confidence vector.
  std::vector<double> confidences(const std::vector<double>& input) const {
    std::vector<double> a = input;
    for (const Layer& layer : layers_) a = forward_layer(layer, a);
    return a;
  }

  // Predicted class: argmax confidence, ties resolved to the lowest index.
  int predict(const std::vector<double>& input) const {
    std::vector<double> p = confidences(input);
    int best = 0;
    for (int i = 1; i < static_cast<int>(p.size()); ++i)
      if (p[i] > p[best]) best = i;
    return best;
  }

  // Flat weight access, used by finite-difference checks.
  std::vector<double> flat_weights() const {
    std::vector<double> out;
    for (const Layer& layer : layers_) {
      out.insert(out.end(), layer.w.begin(), layer.w.end());
      out.insert(out.end(), layer.b.begin(), layer.b.end());
    }
    return out;
  }

  void set_flat_weights(const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (Layer& layer : layers_) {
      for (double& w : layer.w) w = flat.at(pos++);
      for (double& b : layer.b) b = flat.at(pos++);
    }
    if (pos != flat.size()) throw std::invalid_argument("flat weight size mismatch");
  }

  static std::vector<double> forward_layer(const Layer& layer, const std::vector<double>& input) {
    std::vector<double> z(layer.out, 0.0);
    for (int o = 0; o < layer.out; ++o) {
      double sum = layer.bias ? layer.b[o] : 0.0;
      const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) sum += row[i] * input[i];
      z[o] = sum;
    }
    return activate(layer.act, std::move(z));
  }

  static std::vector<double> activate(Activation act, std::vector<double> z) {
    switch (act) {
      case Activation::Linear:
        return z;
      case Activation::Relu:
        for (double& v : z) v = v > 0 ? v : 0.0;
        return z;
      case Activation::Sigmoid:
        for (double& v : z) v = 1.0 / (1.0 + std::exp(-v));
        return z;
      case Activation::Softmax: {
        double mx = *std::max_element(z.begin(), z.end());
        double sum = 0;
        for (double& v : z) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (double& v : z) v /= sum;
        return z;
      }
    }
    return z;
  }

 private:
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
  int epochs = 10;
  int batch_size = 125;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool keep_best_epoch = true;  // snapshot the weights of the best validation epoch
};

struct TrainOutcome {
  DenseModel model;               // best-epoch snapshot (or final weights, see keep_best_epoch)
  double best_val_accuracy = 0.0;
  double final_val_accuracy = 0.0;
  int best_epoch = 0;             // 1-based
  double train_accuracy = 0.0;    // of the returned model on the train split
  bool numerical_failure = false;
};

namespace detail {

struct BatchGradients {
  std::vector<std::vector<double>> w;  // per layer, same shapes as the model
  std::vector<std::vector<double>> b;

  explicit BatchGradients(const DenseModel& model) {
    for (const auto& layer : model.layers()) {
      w.emplace_back(layer.w.size(), 0.0);
      b.emplace_back(layer.b.size(), 0.0);
    }
  }

  void reset() {
    for (auto& g : w) std::fill(g.begin(), g.end(), 0.0);
    for (auto& g : b) std::fill(g.begin(), g.end(), 0.0);
  }
};

inline double activation_derivative(Activation act, double pre, double post) {
  switch (act) {
    case Activation::Linear: return 1.0;
    case Activation::Relu: return pre > 0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return post * (1.0 - post);
    case Activation::Softmax: return 1.0;  // handled jointly with the loss
  }
  return 1.0;
}

// Accumulates the gradient of the mean cross-entropy over one example into
// `grads` (caller divides by the batch size via the scale argument) and
// returns the example's loss.
inline double backprop_example(const DenseModel& model, const std::vector<double>& x, int label,
                               double scale, BatchGradients& grads) {
  const auto& layers = model.layers();
  const std::size_t L = layers.size();

  // Forward, caching pre- and post-activation values.
  std::vector<std::vector<double>> pre(L), post(L);
  const std::vector<double>* input = &x;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = layers[l];
    std::vector<double> z(layer.out, 0.0);
    for (int o = 0; o < layer.out; ++o) {
      double sum = layer.bias ? layer.b[o] : 0.0;
      const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) sum += row[i] * (*input)[i];
      z[o] = sum;
    }
    pre[l] = z;
    post[l] = DenseModel::activate(layer.act, std::move(z));
    input = &post[l];
  }

  const std::vector<double>& p = post[L - 1];
  double loss = -std::log(p[label]);

  // Softmax + cross-entropy collapse to (p - onehot) at the output.
  std::vector<double> delta = p;
  delta[label] -= 1.0;

  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = layers[l];
    const std::vector<double>& below = l == 0 ? x : post[l - 1];
    for (int o = 0; o < layer.out; ++o) {
      double d = delta[o] * scale;
      double* grad_row = grads.w[l].data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) grad_row[i] += d * below[i];
      if (layer.bias) grads.b[l][o] += d;
    }
    if (l == 0) break;
    std::vector<double> next(layer.in, 0.0);
    for (int i = 0; i < layer.in; ++i) {
      double sum = 0;
      for (int o = 0; o < layer.out; ++o) sum += layer.w[static_cast<std::size_t>(o) * layer.in + i] * delta[o];
      next[i] = sum * activation_derivative(layers[l - 1].act, pre[l - 1][i], post[l - 1][i]);
    }
    delta = std::move(next);
  }
  return loss;
}

}  // namespace detail

// Mean cross-entropy over a set of examples; used by tests for
// finite-difference gradient checks.
inline double dense_loss(const DenseModel& model, const std::vector<std::vector<double>>& x,
                         const std::vector<int>& y) {
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto p = model.confidences(x[i]);
    total += -std::log(p[y[i]]);
  }
  return total / static_cast<double>(x.size());
}

// Analytic gradient of dense_loss with respect to every weight, flattened in
// the same order as DenseModel::flat_weights().
inline std::vector<double> dense_loss_gradient(const DenseModel& model,
                                               const std::vector<std::vector<double>>& x,
                                               const std::vector<int>& y) {
  detail::BatchGradients grads(model);
  double scale = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) detail::backprop_example(model, x[i], y[i], scale, grads);
  std::vector<double> flat;
  for (std::size_t l = 0; l < grads.w.size(); ++l) {
    flat.insert(flat.end(), grads.w[l].begin(), grads.w[l].end());
    flat.insert(flat.end(), grads.b[l].begin(), grads.b[l].end());
  }
  return flat;
}

inline double dataset_accuracy(const DenseModel& model, const LabeledSet& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (model.predict(data.x[i]) == data.y[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Trains a model on the split's train set, scoring each epoch on the
// validation set. The returned model is the snapshot of the best epoch
// (earliest epoch wins ties) unless keep_best_epoch is off.
inline TrainOutcome train_dense_model(const DenseNetSpec& spec, const DatasetSplit& data,
                                      const TrainOptions& opt) {
  if (opt.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (opt.batch_size < 1 || static_cast<std::size_t>(opt.batch_size) > data.train.size())
    throw std::invalid_argument("batch_size must be in [1, train size]");

  TrainOutcome outcome;
  DenseModel model(spec, derive_seed(opt.seed, "weights"));

  // Momentum velocity, same shapes as the weights.
  detail::BatchGradients velocity(model);
  detail::BatchGradients grads(model);

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  DenseModel best = model;
  double best_val = -1.0;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    RandomStream shuffle_rng = RandomStream::derive(opt.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      std::size_t end = std::min(order.size(), start + opt.batch_size);
      double scale = 1.0 / static_cast<double>(end - start);
      grads.reset();
      double batch_loss = 0;
      for (std::size_t i = start; i < end; ++i)
        batch_loss += detail::backprop_example(model, data.train.x[order[i]], data.train.y[order[i]], scale, grads);
      if (!std::isfinite(batch_loss)) {
        outcome.numerical_failure = true;
        return outcome;
      }
      auto& layers = model.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t k = 0; k < layers[l].w.size(); ++k) {
          velocity.w[l][k] = opt.momentum * velocity.w[l][k] - opt.learning_rate * grads.w[l][k];
          layers[l].w[k] += velocity.w[l][k];
        }
        for (std::size_t k = 0; k < layers[l].b.size(); ++k) {
          velocity.b[l][k] = opt.momentum * velocity.b[l][k] - opt.learning_rate * grads.b[l][k];
          layers[l].b[k] += velocity.b[l][k];
        }
      }
    }

    double val = dataset_accuracy(model, data.validation);
    outcome.final_val_accuracy = val;
    if (val > best_val) {
      best_val = val;
      best = model;
      best_epoch = epoch;
    }
  }

  outcome.best_val_accuracy = best_val;
  outcome.best_epoch = best_epoch;
  outcome.model = opt.keep_best_epoch ? best : model;
  outcome.train_accuracy = dataset_accuracy(outcome.model, data.train);
  return outcome;
}

inline double test_accuracy(const DenseModel& model, const DatasetSplit& data) {
  return dataset_accuracy(model, data.test);
}

// Averages the models' softmax confidences per input and takes the argmax
// (lowest index on ties). All models must agree on the output arity.
inline std::vector<int> ensemble_predict(const std::vector<DenseModel>& models,
                                         const std::vector<std::vector<double>>& inputs) {
  if (models.empty()) throw std::invalid_argument("ensemble needs at least one model");
  int arity = models.front().output_arity();
  for (const auto& m : models)
    if (m.output_arity() != arity)
      throw ArityMismatch("ensemble models disagree on output arity");

  std::vector<int> labels;
  labels.reserve(inputs.size());
  for (const auto& input : inputs) {
    std::vector<double> mean(arity, 0.0);
    for (const auto& m : models) {
      auto p = m.confidences(input);
      for (int i = 0; i < arity; ++i) mean[i] += p[i];
    }
    for (double& v : mean) v /= static_cast<double>(models.size());
    int best = 0;
    for (int i = 1; i < arity; ++i)
      if (mean[i] > mean[best]) best = i;
    labels.push_back(best);
  }
  return labels;
}

}  // namespace gramevo
