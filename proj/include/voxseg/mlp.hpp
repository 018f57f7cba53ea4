#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "voxseg/error.hpp"
#include "voxseg/features.hpp"
#include "voxseg/rng.hpp"

namespace voxseg {

// Two-hidden-layer perceptron: leaky ReLU hiddens, softmax output, mean
// cross-entropy loss, Adam updates, inverted dropout on hidden activations.
// All math in double so analytic gradients can be checked against central
// finite differences.

constexpr double kLeakySlope = 0.01;

struct MlpHyperparams {
  int hidden1 = 64;
  int hidden2 = 64;
  double dropout = 0.0;      // drop probability in [0, 0.5]
  double init_stddev = 0.1;  // weight init is Normal(0, stddev^2)
  int minibatch = 32;
};

inline void to_json(nlohmann::json& j, const MlpHyperparams& h) {
  j = {{"hidden1", h.hidden1},
       {"hidden2", h.hidden2},
       {"dropout", h.dropout},
       {"init_stddev", h.init_stddev},
       {"minibatch", h.minibatch}};
}
inline void from_json(const nlohmann::json& j, MlpHyperparams& h) {
  j.at("hidden1").get_to(h.hidden1);
  j.at("hidden2").get_to(h.hidden2);
  j.at("dropout").get_to(h.dropout);
  j.at("init_stddev").get_to(h.init_stddev);
  j.at("minibatch").get_to(h.minibatch);
}

struct MlpTrainConfig {
  int max_epochs = 500;
  int patience = 10;  // epochs without validation improvement before stopping
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline void to_json(nlohmann::json& j, const MlpTrainConfig& c) {
  j = {{"max_epochs", c.max_epochs}, {"patience", c.patience},
       {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
       {"beta2", c.beta2}, {"epsilon", c.epsilon}};
}
inline void from_json(const nlohmann::json& j, MlpTrainConfig& c) {
  if (j.contains("max_epochs")) j.at("max_epochs").get_to(c.max_epochs);
  if (j.contains("patience")) j.at("patience").get_to(c.patience);
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
  if (j.contains("beta1")) j.at("beta1").get_to(c.beta1);
  if (j.contains("beta2")) j.at("beta2").get_to(c.beta2);
  if (j.contains("epsilon")) j.at("epsilon").get_to(c.epsilon);
}

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, const MlpTrainConfig& cfg) {
    ++t;
    const double c1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      params[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
};

class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(int n_inputs, int n_outputs, MlpHyperparams hp)
      : in_(n_inputs), h1_(hp.hidden1), h2_(hp.hidden2), out_(n_outputs), hp_(hp) {
    if (in_ < 1 || h1_ < 1 || h2_ < 1 || out_ < 2)
      throw ContractError("invalid network shape");
    params_.assign(param_count(), 0.0);
  }

  std::size_t param_count() const {
    return std::size_t(h1_) * in_ + h1_ + std::size_t(h2_) * h1_ + h2_ +
           std::size_t(out_) * h2_ + out_;
  }

  void init_weights(Rng& rng) {
    // Weights are Gaussian draws, biases stay zero. Order: W1, b1, W2, b2,
    // W3, b3 so the layout matches gradient vectors.
    double* p = params_.data();
    auto fill = [&](std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) *p++ = rng.next_normal() * hp_.init_stddev;
    };
    auto skip = [&](std::size_t n) { p += n; };
    fill(std::size_t(h1_) * in_);
    skip(std::size_t(h1_));
    fill(std::size_t(h2_) * h1_);
    skip(std::size_t(h2_));
    fill(std::size_t(out_) * h2_);
    skip(std::size_t(out_));
  }

  int n_inputs() const { return in_; }
  int n_outputs() const { return out_; }
  const MlpHyperparams& hyperparams() const { return hp_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> predict_proba(std::span<const double> row) const {
    Workspace ws(*this);
    forward(row, nullptr, nullptr, ws);
    std::vector<double> probs(static_cast<std::size_t>(out_));
    softmax(ws.z3, probs);
    return probs;
  }

  int predict(std::span<const double> row) const {
    const auto p = predict_proba(row);
    return int(std::max_element(p.begin(), p.end()) - p.begin());
  }

  double mean_cross_entropy(const FeatureMatrix& x, const std::vector<int>& y) const {
    Workspace ws(*this);
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      forward(x.row(i), nullptr, nullptr, ws);
      sum += cross_entropy(ws.z3, y[i]);
    }
    return sum / double(x.rows());
  }

  double accuracy(const FeatureMatrix& x, const std::vector<int>& y) const {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < x.rows(); ++i)
      if (predict(x.row(i)) == y[i]) ++hits;
    return double(hits) / double(x.rows());
  }

  /// Gradient of the mean cross-entropy over the given rows, dropout off.
  std::vector<double> analytic_gradient(const FeatureMatrix& x, const std::vector<int>& y,
                                        std::span<const std::uint32_t> rows) const {
    std::vector<double> grad(param_count(), 0.0);
    Workspace ws(*this);
    for (auto r : rows) {
      forward(x.row(r), nullptr, nullptr, ws);
      backward(x.row(r), y[r], 1.0 / double(rows.size()), nullptr, nullptr, ws, grad);
    }
    return grad;
  }

 private:
  friend struct MlpTrainer;

  struct Workspace {
    std::vector<double> z1, a1, z2, a2, z3, dlog, d2, d1;
    explicit Workspace(const MlpModel& m)
        : z1(std::size_t(m.h1_)), a1(std::size_t(m.h1_)), z2(std::size_t(m.h2_)),
          a2(std::size_t(m.h2_)), z3(std::size_t(m.out_)), dlog(std::size_t(m.out_)),
          d2(std::size_t(m.h2_)), d1(std::size_t(m.h1_)) {}
  };

  // Parameter block offsets in params_ / gradient vectors.
  std::size_t ow1() const { return 0; }
  std::size_t ob1() const { return std::size_t(h1_) * in_; }
  std::size_t ow2() const { return ob1() + h1_; }
  std::size_t ob2() const { return ow2() + std::size_t(h2_) * h1_; }
  std::size_t ow3() const { return ob2() + h2_; }
  std::size_t ob3() const { return ow3() + std::size_t(out_) * h2_; }

  static double leaky(double z) { return z > 0.0 ? z : kLeakySlope * z; }
  static double leaky_grad(double z) { return z > 0.0 ? 1.0 : kLeakySlope; }

  // masks hold 0 or 1/keep per hidden unit (inverted dropout); null = off.
  void forward(std::span<const double> x, const double* mask1, const double* mask2,
               Workspace& ws) const {
    const double* p = params_.data();
    for (int j = 0; j < h1_; ++j) {
      double z = p[ob1() + std::size_t(j)];
      const double* w = p + ow1() + std::size_t(j) * in_;
      for (int i = 0; i < in_; ++i) z += w[i] * x[std::size_t(i)];
      ws.z1[std::size_t(j)] = z;
      ws.a1[std::size_t(j)] = leaky(z) * (mask1 ? mask1[j] : 1.0);
    }
    for (int j = 0; j < h2_; ++j) {
      double z = p[ob2() + std::size_t(j)];
      const double* w = p + ow2() + std::size_t(j) * h1_;
      for (int i = 0; i < h1_; ++i) z += w[i] * ws.a1[std::size_t(i)];
      ws.z2[std::size_t(j)] = z;
      ws.a2[std::size_t(j)] = leaky(z) * (mask2 ? mask2[j] : 1.0);
    }
    for (int k = 0; k < out_; ++k) {
      double z = p[ob3() + std::size_t(k)];
      const double* w = p + ow3() + std::size_t(k) * h2_;
      for (int i = 0; i < h2_; ++i) z += w[i] * ws.a2[std::size_t(i)];
      ws.z3[std::size_t(k)] = z;
    }
  }

  static void softmax(const std::vector<double>& logits, std::vector<double>& out) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) sum += out[k] = std::exp(logits[k] - mx);
    for (auto& v : out) v /= sum;
  }

  static double cross_entropy(const std::vector<double>& logits, int label) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    return std::log(sum) + mx - logits[std::size_t(label)];
  }

  // Accumulates weight * dCE/dparams for one sample into grad; expects ws
  // to hold the matching forward pass.
  void backward(std::span<const double> x, int label, double weight, const double* mask1,
                const double* mask2, Workspace& ws, std::vector<double>& grad) const {
    softmax(ws.z3, ws.dlog);
    ws.dlog[std::size_t(label)] -= 1.0;
    for (auto& v : ws.dlog) v *= weight;

    const double* p = params_.data();
    double* g = grad.data();
    std::fill(ws.d2.begin(), ws.d2.end(), 0.0);
    for (int k = 0; k < out_; ++k) {
      const double dk = ws.dlog[std::size_t(k)];
      double* gw = g + ow3() + std::size_t(k) * h2_;
      const double* w = p + ow3() + std::size_t(k) * h2_;
      for (int j = 0; j < h2_; ++j) {
        gw[j] += dk * ws.a2[std::size_t(j)];
        ws.d2[std::size_t(j)] += dk * w[j];
      }
      g[ob3() + std::size_t(k)] += dk;
    }

    std::fill(ws.d1.begin(), ws.d1.end(), 0.0);
    for (int j = 0; j < h2_; ++j) {
      const double dz =
          ws.d2[std::size_t(j)] * (mask2 ? mask2[j] : 1.0) * leaky_grad(ws.z2[std::size_t(j)]);
      double* gw = g + ow2() + std::size_t(j) * h1_;
      const double* w = p + ow2() + std::size_t(j) * h1_;
      for (int i = 0; i < h1_; ++i) {
        gw[i] += dz * ws.a1[std::size_t(i)];
        ws.d1[std::size_t(i)] += dz * w[i];
      }
      g[ob2() + std::size_t(j)] += dz;
    }

    for (int j = 0; j < h1_; ++j) {
      const double dz =
          ws.d1[std::size_t(j)] * (mask1 ? mask1[j] : 1.0) * leaky_grad(ws.z1[std::size_t(j)]);
      double* gw = g + ow1() + std::size_t(j) * in_;
      for (int i = 0; i < in_; ++i) gw[i] += dz * x[std::size_t(i)];
      g[ob1() + std::size_t(j)] += dz;
    }
  }

  int in_ = 0, h1_ = 0, h2_ = 0, out_ = 0;
  MlpHyperparams hp_;
  std::vector<double> params_;
};

struct MlpTrainResult {
  MlpModel model;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  std::vector<double> val_accuracies;  // one entry per completed epoch
};

struct MlpTrainer {
  /// Trains with per-epoch shuffling and per-sample dropout masks, keeping
  /// the parameter snapshot with the highest validation accuracy. Stops
  /// after cfg.patience epochs without improvement or cfg.max_epochs
  /// overall.
  static MlpTrainResult train(const FeatureMatrix& x_train, const std::vector<int>& y_train,
                              const FeatureMatrix& x_val, const std::vector<int>& y_val,
                              int n_classes, const MlpHyperparams& hp,
                              const MlpTrainConfig& cfg, std::uint64_t seed) {
    if (x_train.rows() == 0 || x_val.rows() == 0)
      throw ContractError("mlp training needs non-empty train and validation sets");
    if (hp.dropout < 0.0 || hp.dropout >= 1.0) throw ContractError("dropout must be in [0,1)");

    Rng rng(seed);
    MlpModel model(int(x_train.cols), n_classes, hp);
    model.init_weights(rng);
    AdamState adam(model.param_count());

    MlpTrainResult res;
    res.model = model;
    res.best_val_accuracy = model.accuracy(x_val, y_val);
    res.best_epoch = -1;  // untrained snapshot; first epoch almost always beats it

    const double keep = 1.0 - hp.dropout;
    std::vector<std::uint32_t> order(x_train.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = std::uint32_t(i);
    std::vector<double> grad(model.param_count());
    std::vector<double> mask1(std::size_t(hp.hidden1)), mask2(std::size_t(hp.hidden2));
    MlpModel::Workspace ws(model);

    int since_best = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
      rng.shuffle(order);
      for (std::size_t b = 0; b < order.size(); b += std::size_t(hp.minibatch)) {
        const std::size_t e = std::min(order.size(), b + std::size_t(hp.minibatch));
        std::fill(grad.begin(), grad.end(), 0.0);
        const double w = 1.0 / double(e - b);
        for (std::size_t i = b; i < e; ++i) {
          const double* m1 = nullptr;
          const double* m2 = nullptr;
          if (hp.dropout > 0.0) {
            for (auto& m : mask1) m = rng.next_unit() < keep ? 1.0 / keep : 0.0;
            for (auto& m : mask2) m = rng.next_unit() < keep ? 1.0 / keep : 0.0;
            m1 = mask1.data();
            m2 = mask2.data();
          }
          const auto row = x_train.row(order[i]);
          model.forward(row, m1, m2, ws);
          model.backward(row, y_train[order[i]], w, m1, m2, ws, grad);
        }
        adam.step(model.params(), grad, cfg);
      }

      const double val_acc = model.accuracy(x_val, y_val);
      res.val_accuracies.push_back(val_acc);
      res.epochs_run = epoch + 1;
      if (val_acc > res.best_val_accuracy) {
        res.best_val_accuracy = val_acc;
        res.best_epoch = epoch;
        res.model = model;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
    return res;
  }
};

inline nlohmann::json mlp_to_json(const MlpModel& m) {
  return {{"n_inputs", m.n_inputs()},
          {"n_outputs", m.n_outputs()},
          {"hyperparams", m.hyperparams()},
          {"params", m.params()}};
}

inline MlpModel mlp_from_json(const nlohmann::json& j) {
  MlpModel m(j.at("n_inputs").get<int>(), j.at("n_outputs").get<int>(),
             j.at("hyperparams").get<MlpHyperparams>());
  auto p = j.at("params").get<std::vector<double>>();
  if (p.size() != m.param_count()) throw IoError(IoError::Kind::bad_metadata, "parameter count mismatch in network model");
  m.params() = std::move(p);
  return m;
}

}  // namespace voxseg
