// Small fully connected position regressor trained from scratch: rectified
// linear hidden layers, identity output, inverted dropout, mean-squared-error
// loss, and adaptive-moment gradient descent. Everything is deterministic
// given the caller's RNG.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gentact/math.hpp"
#include "gentact/rng.hpp"

namespace gentact {

struct DimensionMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteLossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Feed-forward network sized [input, hidden..., 3]. Weights are row-major
// (out x in) per layer.
class MlpModel {
 public:
  MlpModel(int input_dim, std::vector<int> hidden_widths, Rng& init_rng) {
    if (input_dim < 1) throw std::invalid_argument("MlpModel: input_dim must be >= 1");
    for (int h : hidden_widths)
      if (h < 1) throw std::invalid_argument("MlpModel: hidden widths must be >= 1");
    sizes_.push_back(input_dim);
    for (int h : hidden_widths) sizes_.push_back(h);
    sizes_.push_back(3);
    for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
      int fan_in = sizes_[l], fan_out = sizes_[l + 1];
      double scale = std::sqrt(2.0 / fan_in);
      std::vector<double> w(static_cast<size_t>(fan_out) * fan_in);
      for (auto& v : w) v = init_rng.normal(0.0, scale);
      weights_.push_back(std::move(w));
      biases_.emplace_back(fan_out, 0.0);
    }
  }

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  size_t layer_count() const { return weights_.size(); }
  std::vector<std::vector<double>>& weights() { return weights_; }
  std::vector<std::vector<double>>& biases() { return biases_; }
  const std::vector<std::vector<double>>& weights() const { return weights_; }
  const std::vector<std::vector<double>>& biases() const { return biases_; }

  // Inference pass: no dropout.
  Vec3 forward(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != input_dim())
      throw DimensionMismatchError("MlpModel::forward: feature size mismatch");
    std::vector<double> a = x;
    for (size_t l = 0; l < weights_.size(); ++l) {
      a = affine(l, a);
      if (l + 1 < weights_.size())
        for (auto& v : a) v = v > 0.0 ? v : 0.0;
    }
    return {a[0], a[1], a[2]};
  }

  bool finite() const {
    for (const auto& w : weights_)
      for (double v : w)
        if (!std::isfinite(v)) return false;
    for (const auto& b : biases_)
      for (double v : b)
        if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::vector<double> affine(size_t layer, const std::vector<double>& in) const {
    int rows = sizes_[layer + 1], cols = sizes_[layer];
    std::vector<double> out(rows);
    const auto& w = weights_[layer];
    for (int r = 0; r < rows; ++r) {
      double acc = biases_[layer][r];
      const double* wr = w.data() + static_cast<size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) acc += wr[c] * in[c];
      out[r] = acc;
    }
    return out;
  }

  std::vector<int> sizes_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> biases_;

  friend struct MlpBatchPass;
};

// Per-batch dropout masks for the hidden layers. masks[h][sample * width +
// unit] is 0 (dropped) or 1/(1-rate) (kept, inverted scaling); empty means
// dropout off.
using DropoutMasks = std::vector<std::vector<double>>;

inline DropoutMasks make_dropout_masks(const MlpModel& model, int batch_size,
                                       double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("make_dropout_masks: rate must be in [0, 1)");
  DropoutMasks masks;
  const auto& sizes = model.sizes();
  double keep_scale = 1.0 / (1.0 - rate);
  for (size_t l = 1; l + 1 < sizes.size(); ++l) {
    std::vector<double> m(static_cast<size_t>(batch_size) * sizes[l]);
    for (auto& v : m) v = (rate > 0.0 && rng.uniform() < rate) ? 0.0 : keep_scale;
    masks.push_back(std::move(m));
  }
  return masks;
}

// Gradients with the same shapes as the model parameters.
struct MlpGradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  explicit MlpGradients(const MlpModel& model) {
    for (const auto& w : model.weights()) weights.emplace_back(w.size(), 0.0);
    for (const auto& b : model.biases()) biases.emplace_back(b.size(), 0.0);
  }

  void zero() {
    for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
  }
};

// One forward/backward evaluation of a batch. Loss is the mean squared error
// over every output component in the batch.
struct MlpBatchPass {
  // Forward only; masks == nullptr disables dropout.
  static double loss(const MlpModel& model,
                     const std::vector<std::vector<double>>& xs,
                     const std::vector<Vec3>& ys, const DropoutMasks* masks) {
    return run(model, xs, ys, masks, nullptr);
  }

  // Forward + backprop into `grads` (overwritten).
  static double loss_and_grad(const MlpModel& model,
                              const std::vector<std::vector<double>>& xs,
                              const std::vector<Vec3>& ys, const DropoutMasks* masks,
                              MlpGradients& grads) {
    grads.zero();
    return run(model, xs, ys, masks, &grads);
  }

 private:
  static double run(const MlpModel& model, const std::vector<std::vector<double>>& xs,
                    const std::vector<Vec3>& ys, const DropoutMasks* masks,
                    MlpGradients* grads) {
    if (xs.empty() || xs.size() != ys.size())
      throw std::invalid_argument("MlpBatchPass: batch inputs/targets mismatch");
    const auto& sizes = model.sizes_;
    size_t n_layers = model.weights_.size();
    size_t batch = xs.size();
    double inv_norm = 1.0 / (static_cast<double>(batch) * model.output_dim());

    double total_loss = 0.0;
    // activations[l][sample] for layer l (post-nonlinearity, post-dropout)
    std::vector<std::vector<std::vector<double>>> acts(n_layers + 1);
    for (auto& layer_acts : acts) layer_acts.resize(batch);

    for (size_t s = 0; s < batch; ++s) {
      if (static_cast<int>(xs[s].size()) != model.input_dim())
        throw DimensionMismatchError("MlpBatchPass: feature size mismatch");
      acts[0][s] = xs[s];
      for (size_t l = 0; l < n_layers; ++l) {
        auto z = model.affine(l, acts[l][s]);
        if (l + 1 < n_layers) {
          for (auto& v : z) v = v > 0.0 ? v : 0.0;
          if (masks && !masks->empty()) {
            const auto& m = (*masks)[l];
            for (size_t u = 0; u < z.size(); ++u)
              z[u] *= m[s * sizes[l + 1] + u];
          }
        }
        acts[l + 1][s] = std::move(z);
      }
      const auto& out = acts[n_layers][s];
      double target[3] = {ys[s].x, ys[s].y, ys[s].z};
      for (int k = 0; k < 3; ++k) {
        double d = out[k] - target[k];
        total_loss += d * d;
      }
    }
    total_loss *= inv_norm;

    if (grads) {
      for (size_t s = 0; s < batch; ++s) {
        const auto& out = acts[n_layers][s];
        double target[3] = {ys[s].x, ys[s].y, ys[s].z};
        std::vector<double> delta(3);
        for (int k = 0; k < 3; ++k)
          delta[k] = 2.0 * (out[k] - target[k]) * inv_norm;
        for (size_t l = n_layers; l-- > 0;) {
          int rows = sizes[l + 1], cols = sizes[l];
          const auto& a_in = acts[l][s];
          auto& gw = grads->weights[l];
          auto& gb = grads->biases[l];
          for (int r = 0; r < rows; ++r) {
            double d = delta[r];
            gb[r] += d;
            double* gwr = gw.data() + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) gwr[c] += d * a_in[c];
          }
          if (l == 0) break;
          std::vector<double> prev_delta(cols, 0.0);
          const auto& w = model.weights_[l];
          for (int r = 0; r < rows; ++r) {
            double d = delta[r];
            const double* wr = w.data() + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) prev_delta[c] += d * wr[c];
          }
          // Backprop through dropout and the rectifier of layer l. acts[l]
          // is post-mask, so a kept unit with positive preactivation has a
          // positive activation; dropped or non-positive units pass nothing.
          const auto& a_here = acts[l][s];
          if (masks && !masks->empty()) {
            const auto& m = (*masks)[l - 1];
            for (int c = 0; c < cols; ++c) {
              double mv = m[s * sizes[l] + c];
              prev_delta[c] = (a_here[c] > 0.0 && mv > 0.0) ? prev_delta[c] * mv : 0.0;
            }
          } else {
            for (int c = 0; c < cols; ++c)
              if (a_here[c] <= 0.0) prev_delta[c] = 0.0;
          }
          delta = std::move(prev_delta);
        }
      }
    }
    return total_loss;
  }
};

// Adaptive-moment gradient descent with bias-corrected first/second moments.
class AdamOptimizer {
 public:
  AdamOptimizer(const MlpModel& model, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon) {
    if (learning_rate <= 0.0)
      throw std::invalid_argument("AdamOptimizer: learning_rate must be > 0");
    for (const auto& w : model.weights()) {
      mw_.emplace_back(w.size(), 0.0);
      vw_.emplace_back(w.size(), 0.0);
    }
    for (const auto& b : model.biases()) {
      mb_.emplace_back(b.size(), 0.0);
      vb_.emplace_back(b.size(), 0.0);
    }
  }

  void step(MlpModel& model, const MlpGradients& grads) {
    ++t_;
    double corr1 = 1.0 - std::pow(b1_, t_);
    double corr2 = 1.0 - std::pow(b2_, t_);
    for (size_t l = 0; l < model.weights().size(); ++l) {
      update(model.weights()[l], grads.weights[l], mw_[l], vw_[l], corr1, corr2);
      update(model.biases()[l], grads.biases[l], mb_[l], vb_[l], corr1, corr2);
    }
  }

 private:
  void update(std::vector<double>& param, const std::vector<double>& grad,
              std::vector<double>& m, std::vector<double>& v, double corr1,
              double corr2) {
    for (size_t i = 0; i < param.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * grad[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * grad[i] * grad[i];
      double mhat = m[i] / corr1;
      double vhat = v[i] / corr2;
      param[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> mw_, vw_, mb_, vb_;
};

struct TrainConfig {
  int epochs = 40;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dropout_rate = 0.1;
};

// Trains one model on the subset of (features, targets) named by `subset`,
// reshuffling each epoch. Returns the mean batch loss per epoch. Throws
// NonFiniteLossError the moment a loss or parameter stops being finite.
inline std::vector<double> train_mlp(MlpModel& model,
                                     const std::vector<std::vector<double>>& features,
                                     const std::vector<Vec3>& targets,
                                     const std::vector<int>& subset,
                                     const TrainConfig& config, Rng& rng) {
  if (features.size() != targets.size())
    throw std::invalid_argument("train_mlp: features/targets size mismatch");
  if (subset.empty()) throw std::invalid_argument("train_mlp: empty training subset");
  for (int idx : subset)
    if (idx < 0 || idx >= static_cast<int>(features.size()))
      throw std::invalid_argument("train_mlp: subset index out of range");
  if (config.epochs < 1 || config.batch_size < 1)
    throw std::invalid_argument("train_mlp: epochs and batch_size must be >= 1");

  AdamOptimizer opt(model, config.learning_rate, config.beta1, config.beta2,
                    config.epsilon);
  MlpGradients grads(model);
  std::vector<int> order = subset;
  std::vector<double> epoch_losses;
  epoch_losses.reserve(config.epochs);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::vector<double>> xs;
      std::vector<Vec3> ys;
      xs.reserve(end - start);
      ys.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        xs.push_back(features[order[i]]);
        ys.push_back(targets[order[i]]);
      }
      auto masks = make_dropout_masks(model, static_cast<int>(xs.size()),
                                      config.dropout_rate, rng);
      double loss = MlpBatchPass::loss_and_grad(model, xs, ys, &masks, grads);
      if (!std::isfinite(loss))
        throw NonFiniteLossError("train_mlp: non-finite batch loss");
      opt.step(model, grads);
      loss_sum += loss;
      ++batches;
    }
    if (!model.finite())
      throw NonFiniteLossError("train_mlp: non-finite parameters after epoch");
    epoch_losses.push_back(loss_sum / batches);
  }
  return epoch_losses;
}

}  // namespace gentact
