#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "seval/matrix.hpp"
#include "seval/rng.hpp"

namespace seval {

enum class ModelKind { kLinearSoftmax, kMlp };

struct ModelSpec {
  ModelKind kind = ModelKind::kLinearSoftmax;
  int input_dim = 2;
  int n_classes = 2;
  int hidden_width = 32;  // mlp only
  std::uint64_t init_seed = 0;
};

// Small softmax classifier trained with plain SGD. Either a linear map or a
// one-hidden-layer tanh network. Parameters live in one flat vector so the
// averaged (EMA) copy and finite-difference checks can treat them opaquely.
//
// Layout: linear  -> W[C x d], b[C]
//         mlp     -> W1[h x d], b1[h], W2[C x h], b2[C]
class Classifier {
 public:
  explicit Classifier(const ModelSpec& spec) : spec_(spec) {
    if (spec.input_dim < 1 || spec.n_classes < 2)
      throw std::invalid_argument("Classifier: bad shape");
    if (spec.kind == ModelKind::kMlp && spec.hidden_width < 1)
      throw std::invalid_argument("Classifier: hidden_width must be >= 1");
    params_.assign(static_cast<std::size_t>(param_count(spec)), 0.0);
    Rng rng(spec.init_seed);
    // Scaled-normal init on the weight blocks; biases start at zero.
    if (spec.kind == ModelKind::kLinearSoftmax) {
      double s = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
      for (int i = 0; i < spec.n_classes * spec.input_dim; ++i)
        params_[static_cast<std::size_t>(i)] = s * rng.normal();
    } else {
      double s1 = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
      double s2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden_width));
      int o = 0;
      for (int i = 0; i < spec.hidden_width * spec.input_dim; ++i, ++o)
        params_[static_cast<std::size_t>(o)] = s1 * rng.normal();
      o += spec.hidden_width;  // b1 stays zero
      for (int i = 0; i < spec.n_classes * spec.hidden_width; ++i, ++o)
        params_[static_cast<std::size_t>(o)] = s2 * rng.normal();
    }
  }

  static int param_count(const ModelSpec& spec) {
    if (spec.kind == ModelKind::kLinearSoftmax)
      return spec.n_classes * spec.input_dim + spec.n_classes;
    return spec.hidden_width * spec.input_dim + spec.hidden_width +
           spec.n_classes * spec.hidden_width + spec.n_classes;
  }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<double>& params() const { return params_; }

  void set_params(const std::vector<double>& p) {
    if (p.size() != params_.size())
      throw std::invalid_argument("Classifier::set_params: size mismatch");
    params_ = p;
  }

  void forward(const double* x, double* logits) const {
    forward_with_params(params_, x, logits, nullptr);
  }

  Matrix forward(const Matrix& features) const {
    if (features.cols() != spec_.input_dim)
      throw std::invalid_argument("Classifier::forward: feature-dim mismatch");
    Matrix out(features.rows(), spec_.n_classes);
    std::vector<double> hidden(spec_.kind == ModelKind::kMlp
                                   ? static_cast<std::size_t>(spec_.hidden_width)
                                   : 0);
    for (int i = 0; i < features.rows(); ++i)
      forward_with_params(params_, features.row(i), out.row(i),
                          hidden.empty() ? nullptr : hidden.data());
    return out;
  }

  // Weighted softmax cross-entropy: sum_i weight_i * H(target_i, softmax(f(x_i))).
  // Returns the loss; when grad != nullptr, adds the analytic gradient into it
  // (same layout as params). Samples with weight 0 are skipped entirely.
  double ce_loss_and_grad(const Matrix& features, const std::vector<int>& targets,
                          const std::vector<double>& sample_weights,
                          std::vector<double>* grad) const {
    const int n = features.rows();
    if (static_cast<int>(targets.size()) != n ||
        static_cast<int>(sample_weights.size()) != n)
      throw std::invalid_argument("ce_loss_and_grad: length mismatch");
    if (features.cols() != spec_.input_dim)
      throw std::invalid_argument("ce_loss_and_grad: feature-dim mismatch");
    if (grad && grad->size() != params_.size())
      throw std::invalid_argument("ce_loss_and_grad: grad size mismatch");

    const int c_out = spec_.n_classes;
    std::vector<double> logits(static_cast<std::size_t>(c_out));
    std::vector<double> prob(static_cast<std::size_t>(c_out));
    std::vector<double> hidden(spec_.kind == ModelKind::kMlp
                                   ? static_cast<std::size_t>(spec_.hidden_width)
                                   : 0);
    std::vector<double> dlogits(static_cast<std::size_t>(c_out));

    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      double w = sample_weights[static_cast<std::size_t>(i)];
      if (w == 0.0) continue;
      int y = targets[static_cast<std::size_t>(i)];
      if (y < 0 || y >= c_out)
        throw std::invalid_argument("ce_loss_and_grad: target out of range");
      const double* x = features.row(i);
      forward_with_params(params_, x, logits.data(),
                          hidden.empty() ? nullptr : hidden.data());
      softmax_row(logits.data(), c_out, prob.data());
      loss -= w * std::log(std::max(prob[static_cast<std::size_t>(y)], 1e-12));
      if (!grad) continue;
      for (int j = 0; j < c_out; ++j)
        dlogits[static_cast<std::size_t>(j)] = w * prob[static_cast<std::size_t>(j)];
      dlogits[static_cast<std::size_t>(y)] -= w;
      backward_sample(x, hidden.data(), dlogits.data(), grad->data());
    }
    return loss;
  }

  void sgd_step(const std::vector<double>& grad, double lr) {
    if (grad.size() != params_.size())
      throw std::invalid_argument("sgd_step: size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= lr * grad[i];
  }

 private:
  void forward_with_params(const std::vector<double>& p, const double* x,
                           double* logits, double* hidden_out) const {
    const int d = spec_.input_dim;
    const int c_out = spec_.n_classes;
    if (spec_.kind == ModelKind::kLinearSoftmax) {
      const double* w = p.data();
      const double* b = p.data() + static_cast<std::size_t>(c_out) * d;
      for (int j = 0; j < c_out; ++j) {
        double acc = b[j];
        const double* wj = w + static_cast<std::size_t>(j) * d;
        for (int k = 0; k < d; ++k) acc += wj[k] * x[k];
        logits[j] = acc;
      }
      return;
    }
    const int h = spec_.hidden_width;
    const double* w1 = p.data();
    const double* b1 = w1 + static_cast<std::size_t>(h) * d;
    const double* w2 = b1 + h;
    const double* b2 = w2 + static_cast<std::size_t>(c_out) * h;
    std::vector<double> local;
    double* hid = hidden_out;
    if (!hid) {
      local.resize(static_cast<std::size_t>(h));
      hid = local.data();
    }
    for (int j = 0; j < h; ++j) {
      double acc = b1[j];
      const double* wj = w1 + static_cast<std::size_t>(j) * d;
      for (int k = 0; k < d; ++k) acc += wj[k] * x[k];
      hid[j] = std::tanh(acc);
    }
    for (int j = 0; j < c_out; ++j) {
      double acc = b2[j];
      const double* wj = w2 + static_cast<std::size_t>(j) * h;
      for (int k = 0; k < h; ++k) acc += wj[k] * hid[k];
      logits[j] = acc;
    }
  }

  // Accumulate d(loss)/d(params) for one sample given d(loss)/d(logits).
  void backward_sample(const double* x, const double* hidden,
                       const double* dlogits, double* grad) const {
    const int d = spec_.input_dim;
    const int c_out = spec_.n_classes;
    if (spec_.kind == ModelKind::kLinearSoftmax) {
      double* gw = grad;
      double* gb = grad + static_cast<std::size_t>(c_out) * d;
      for (int j = 0; j < c_out; ++j) {
        double g = dlogits[j];
        double* gwj = gw + static_cast<std::size_t>(j) * d;
        for (int k = 0; k < d; ++k) gwj[k] += g * x[k];
        gb[j] += g;
      }
      return;
    }
    const int h = spec_.hidden_width;
    const double* w2 = params_.data() + static_cast<std::size_t>(h) * d + h;
    double* gw1 = grad;
    double* gb1 = grad + static_cast<std::size_t>(h) * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + static_cast<std::size_t>(c_out) * h;
    std::vector<double> dhidden(static_cast<std::size_t>(h), 0.0);
    for (int j = 0; j < c_out; ++j) {
      double g = dlogits[j];
      const double* w2j = w2 + static_cast<std::size_t>(j) * h;
      double* gw2j = gw2 + static_cast<std::size_t>(j) * h;
      for (int k = 0; k < h; ++k) {
        gw2j[k] += g * hidden[k];
        dhidden[static_cast<std::size_t>(k)] += g * w2j[k];
      }
      gb2[j] += g;
    }
    for (int j = 0; j < h; ++j) {
      double g = dhidden[static_cast<std::size_t>(j)] * (1.0 - hidden[j] * hidden[j]);
      double* gw1j = gw1 + static_cast<std::size_t>(j) * d;
      for (int k = 0; k < d; ++k) gw1j[k] += g * x[k];
      gb1[j] += g;
    }
  }

  ModelSpec spec_;
  std::vector<double> params_;
};

// In-place decay-weighted parameter average: ema = decay*ema + (1-decay)*live.
inline void ema_blend(std::vector<double>& ema, const std::vector<double>& live,
                      double decay) {
  if (ema.size() != live.size()) throw std::invalid_argument("ema_blend: size mismatch");
  if (!(decay >= 0.0 && decay <= 1.0))
    throw std::invalid_argument("ema_blend: decay must lie in [0, 1]");
  for (std::size_t i = 0; i < ema.size(); ++i)
    ema[i] = decay * ema[i] + (1.0 - decay) * live[i];
}

}  // namespace seval
