#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seval/curriculum.hpp"
#include "seval/matrix.hpp"
#include "seval/metrics.hpp"
#include "seval/model.hpp"
#include "seval/offsets.hpp"
#include "seval/pseudo_labels.hpp"
#include "seval/rng.hpp"
#include "seval/synthdata.hpp"
#include "seval/thresholds.hpp"

namespace seval {

// Pseudo-label policy driving a run.
//   seval           learned offsets + learned per-class thresholds
//   fixed_threshold no offsets, one fixed confidence cutoff
//   la              frequency-based offsets, fixed cutoff
//   da              running-marginal alignment of q, fixed cutoff
//   flex_like       no offsets, cutoff scaled per class by confident counts
enum class Method { kSeval, kFixedThreshold, kLa, kDa, kFlexLike };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kSeval: return "seval";
    case Method::kFixedThreshold: return "fixed_threshold";
    case Method::kLa: return "la";
    case Method::kDa: return "da";
    case Method::kFlexLike: return "flex_like";
  }
  throw std::invalid_argument("method_name: bad enum");
}

inline Method method_from_name(const std::string& s) {
  if (s == "seval") return Method::kSeval;
  if (s == "fixed_threshold") return Method::kFixedThreshold;
  if (s == "la") return Method::kLa;
  if (s == "da") return Method::kDa;
  if (s == "flex_like") return Method::kFlexLike;
  throw std::invalid_argument("unknown method: " + s);
}

struct TrainConfig {
  long long total_iters = 20000;
  int labeled_batch = 64;
  int unlabeled_batch = 128;
  double learning_rate = 0.03;
  double model_ema_decay = 0.999;
  double unlabeled_weight = 1.0;
  Method method = Method::kSeval;

  double fixed_tau = 0.95;  // cutoff for fixed_threshold/la/da and the flex base
  double la_lambda = 1.0;
  double flex_tau_base = 0.95;
  long long flex_update_every = 100;
  bool da_uniform_target = false;  // default target: labeled empirical prior
  double da_marginal_decay = 0.999;

  CurriculumConfig curriculum;  // total_iters_T is overwritten with total_iters
  ThresholdFitConfig thresholds;
  bool thresholds_on_refined = true;       // fit thresholds on offset-refined probs
  bool threshold_uniform_weights = false;  // default: inverse-frequency weights
  OffsetFitConfig offsets;

  ModelKind model_kind = ModelKind::kLinearSoftmax;
  int hidden_width = 32;
  double weak_noise_sd = 0.05;
  double strong_noise_sd = 0.25;
  double strong_dropout = 0.2;

  long long eval_every = 400;
  bool stratified_partition = true;
  std::uint64_t seed = 1;

  // When set (method seval), skip the estimation run and replay this schedule.
  std::optional<Curriculum> preset_curriculum;
};

inline void check_train_config(const TrainConfig& cfg) {
  if (cfg.total_iters < 1) throw std::invalid_argument("train: total_iters must be >= 1");
  if (cfg.labeled_batch < 1 || cfg.unlabeled_batch < 1)
    throw std::invalid_argument("train: batch sizes must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (!(cfg.model_ema_decay >= 0.0 && cfg.model_ema_decay <= 1.0))
    throw std::invalid_argument("train: model_ema_decay must lie in [0, 1]");
  if (!(cfg.unlabeled_weight >= 0.0)) throw std::invalid_argument("train: unlabeled_weight must be >= 0");
  if (!(cfg.fixed_tau >= 0.0 && cfg.fixed_tau <= 1.0))
    throw std::invalid_argument("train: fixed_tau must lie in [0, 1]");
  if (!(cfg.flex_tau_base >= 0.0 && cfg.flex_tau_base <= 1.0))
    throw std::invalid_argument("train: flex_tau_base must lie in [0, 1]");
  if (cfg.flex_update_every < 1) throw std::invalid_argument("train: flex_update_every must be >= 1");
  if (!(cfg.da_marginal_decay >= 0.0 && cfg.da_marginal_decay < 1.0))
    throw std::invalid_argument("train: da_marginal_decay must lie in [0, 1)");
  if (!(cfg.weak_noise_sd >= 0.0) || !(cfg.strong_noise_sd >= 0.0))
    throw std::invalid_argument("train: noise scales must be >= 0");
  if (!(cfg.strong_dropout >= 0.0 && cfg.strong_dropout < 1.0))
    throw std::invalid_argument("train: strong_dropout must lie in [0, 1)");
  if (cfg.eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
}

struct LossRow {
  long long iter = 0;
  double labeled_loss = 0.0;
  double unlabeled_loss = 0.0;
};

// Everything one simulated run produces. Metric rows come from the recorded
// SSL phase; for the learned-schedule method that is the replay run, the
// estimation run is bookkeeping. Test numbers use the averaged model;
// "adjusted" applies the final raw offsets to the test logits.
struct RunRecord {
  int n_classes = 0;
  std::vector<MetricsRow> metrics;
  std::vector<LossRow> losses;
  Curriculum curriculum;      // steps empty for methods without a schedule
  OffsetVector pi_final_raw;  // offsets used for the adjusted prediction
  double test_accuracy = 0.0;
  double test_balanced_accuracy = 0.0;
  double adjusted_test_accuracy = 0.0;
  double adjusted_test_balanced_accuracy = 0.0;
};

// Marginal alignment of probability rows: scale class j by
// target_prior_j / max(running_marginal_j, 1e-8), then renormalize each row.
inline Matrix da_refine(const Matrix& q, const std::vector<double>& running_marginal,
                        const std::vector<double>& target_prior) {
  check_prob_rows(q, "da_refine");
  if (static_cast<int>(running_marginal.size()) != q.cols() ||
      static_cast<int>(target_prior.size()) != q.cols())
    throw std::invalid_argument("da_refine: class-count mismatch");
  std::vector<double> scale(running_marginal.size());
  for (std::size_t j = 0; j < scale.size(); ++j) {
    if (!(target_prior[j] >= 0.0) || !std::isfinite(target_prior[j]) ||
        !std::isfinite(running_marginal[j]))
      throw std::invalid_argument("da_refine: bad prior");
    scale[j] = target_prior[j] / std::max(running_marginal[j], 1e-8);
  }
  Matrix out(q.rows(), q.cols());
  for (int i = 0; i < q.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < q.cols(); ++j) {
      out(i, j) = q(i, j) * scale[static_cast<std::size_t>(j)];
      sum += out(i, j);
    }
    if (!(sum > 0.0)) throw std::invalid_argument("da_refine: row collapsed to zero");
    for (int j = 0; j < q.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

// Count-scaled cutoffs: tau_c = tau_base * count_c / max_j count_j. All-zero
// counts leave every class at tau_base.
inline ThresholdVector flex_like_thresholds(const std::vector<long long>& confident_counts,
                                            double tau_base) {
  if (confident_counts.empty())
    throw std::invalid_argument("flex_like_thresholds: empty counts");
  if (!(tau_base >= 0.0 && tau_base <= 1.0))
    throw std::invalid_argument("flex_like_thresholds: tau_base must lie in [0, 1]");
  long long maxc = 0;
  for (long long v : confident_counts) {
    if (v < 0) throw std::invalid_argument("flex_like_thresholds: negative count");
    maxc = std::max(maxc, v);
  }
  ThresholdVector out;
  out.tau.resize(confident_counts.size());
  if (maxc == 0) {
    std::fill(out.tau.begin(), out.tau.end(), tau_base);
    return out;
  }
  for (std::size_t c = 0; c < confident_counts.size(); ++c)
    out.tau[c] = tau_base * static_cast<double>(confident_counts[c]) / static_cast<double>(maxc);
  return out;
}

// Adjusted hard predictions: argmax of (logits - log pi). Invariant to
// rescaling pi; all-ones pi reproduces the raw argmax.
inline std::vector<int> post_hoc_adjust(const Matrix& test_logits,
                                        const OffsetVector& pi_final_raw) {
  return row_argmax(apply_offsets(test_logits, pi_final_raw));
}

namespace detail {

struct LoopOutput {
  Classifier model;
  Classifier ema_model;
  CurriculumState state;
  std::vector<MetricsRow> metrics;
  std::vector<LossRow> losses;
  std::vector<double> da_marginal;
};

// One SGD pass of T iterations. `holdout` non-null makes this an estimation
// run (schedule estimated on the fly); `schedule` non-null replays a fixed
// schedule. Exactly one source of (pi, tau) applies per method.
inline LoopOutput run_ssl_loop(const SynthDataset& data, const LabeledBatch& labeled,
                               const LabeledBatch* holdout, const Curriculum* schedule,
                               const OffsetVector& method_pi, const TrainConfig& cfg,
                               bool record_metrics, std::uint64_t init_tag,
                               std::uint64_t loop_tag) {
  const int n_classes = data.oracle.n_classes();
  const int dim = labeled.values.cols();
  const long long n_lab = labeled.size();
  const long long n_unl = data.unlabeled.rows();
  if (n_lab < 1 || n_unl < 1) throw std::invalid_argument("train: empty labeled or unlabeled pool");

  CurriculumConfig ccfg = cfg.curriculum;
  ccfg.total_iters_T = cfg.total_iters;
  if (holdout != nullptr) check_curriculum_config(ccfg, "train");

  ModelSpec mspec;
  mspec.kind = cfg.model_kind;
  mspec.input_dim = dim;
  mspec.n_classes = n_classes;
  mspec.hidden_width = cfg.hidden_width;
  mspec.init_seed = derive_seed(cfg.seed, init_tag);

  LoopOutput out{Classifier(mspec), Classifier(mspec), CurriculumState::initial(n_classes), {}, {}, {}};
  std::vector<double> ema_params = out.model.params();

  Rng rng(derive_seed(cfg.seed, loop_tag));

  // Method state.
  OffsetVector pi = OffsetVector::ones(n_classes);
  ThresholdVector tau = ThresholdVector::constant(n_classes, cfg.fixed_tau);
  if (cfg.method == Method::kLa) pi = method_pi;
  if (cfg.method == Method::kFlexLike) tau = ThresholdVector::constant(n_classes, cfg.flex_tau_base);
  std::vector<double> da_marginal(static_cast<std::size_t>(n_classes),
                                  1.0 / static_cast<double>(n_classes));
  std::vector<double> da_target(static_cast<std::size_t>(n_classes),
                                1.0 / static_cast<double>(n_classes));
  if (cfg.method == Method::kDa && !cfg.da_uniform_target) {
    std::vector<long long> lab_counts(static_cast<std::size_t>(n_classes), 0);
    for (int y : labeled.labels) ++lab_counts[static_cast<std::size_t>(y)];
    for (int c = 0; c < n_classes; ++c)
      da_target[static_cast<std::size_t>(c)] =
          static_cast<double>(lab_counts[static_cast<std::size_t>(c)]) / static_cast<double>(n_lab);
  }

  // Scratch buffers reused across iterations.
  Matrix x_weak(cfg.labeled_batch, dim);
  Matrix u_weak(cfg.unlabeled_batch, dim);
  Matrix u_strong(cfg.unlabeled_batch, dim);
  std::vector<int> y_lab(static_cast<std::size_t>(cfg.labeled_batch));
  std::vector<double> w_lab(static_cast<std::size_t>(cfg.labeled_batch),
                            1.0 / static_cast<double>(cfg.labeled_batch));
  std::vector<double> w_unl(static_cast<std::size_t>(cfg.unlabeled_batch));
  std::vector<double> grad(out.model.params().size());

  std::vector<double> gains;

  auto augment_weak = [&](const double* src, double* dst) {
    for (int j = 0; j < dim; ++j) dst[j] = src[j] + cfg.weak_noise_sd * rng.normal();
  };
  auto augment_strong = [&](const double* src, double* dst) {
    for (int j = 0; j < dim; ++j) dst[j] = src[j] + cfg.strong_noise_sd * rng.normal();
    for (int j = 0; j < dim; ++j)
      if (rng.uniform01() < cfg.strong_dropout) dst[j] = 0.0;
  };

  auto current_pi = [&]() -> const OffsetVector& { return pi; };
  auto current_tau = [&]() -> const ThresholdVector& { return tau; };

  // Pool-level pseudo-labels for metrics: averaged model on clean inputs.
  auto eval_metrics = [&](long long iter) {
    out.ema_model.set_params(ema_params);
    Matrix z_pool = out.ema_model.forward(data.unlabeled);
    std::vector<int> old_labels = row_argmax(z_pool);

    Matrix q_pool;
    if (cfg.method == Method::kDa) {
      q_pool = da_refine(softmax_rows(z_pool), da_marginal, da_target);
    } else {
      q_pool = softmax_rows(apply_offsets(z_pool, current_pi()));
    }
    std::vector<int> new_labels = row_argmax(q_pool);

    PseudoBatch pool;
    pool.q = std::move(q_pool);
    pool.hard_labels = new_labels;
    pool.pred_labels = row_argmax(out.model.forward(data.unlabeled));
    pool.mask = select_mask(pool.q, pool.pred_labels, current_tau());

    MetricsRow row;
    row.iter = iter;
    row.gain = gain(old_labels, new_labels, data.oracle);
    gains.push_back(row.gain);
    row.cum_gain = cumulative_gain(gains).back();
    Correctness corr = correctness(pool, data.oracle, current_tau());
    row.quantity = corr.quantity;
    row.quality = corr.quality;
    row.correctness = corr.correctness;

    Matrix z_test = out.ema_model.forward(data.test.values);
    std::vector<int> test_pred = row_argmax(z_test);
    row.accuracy = accuracy(test_pred, data.test.labels);
    row.balanced_accuracy = balanced_accuracy(test_pred, data.test.labels, n_classes);
    ClasswisePR pr = classwise_pr(test_pred, data.test.labels, n_classes);
    row.precision = std::move(pr.precision);
    row.recall = std::move(pr.recall);
    out.metrics.push_back(std::move(row));
  };

  for (long long iter = 1; iter <= cfg.total_iters; ++iter) {
    // Schedule lookup (replay) before anything else this iteration.
    if (schedule != nullptr) {
      int l = replay_step_index(iter, ccfg);
      const CurriculumStep& step = schedule->steps[static_cast<std::size_t>(l - 1)];
      pi = step.pi;
      tau = step.tau;
    } else if (holdout != nullptr) {
      pi = out.state.pi_blend;
      tau = out.state.tau_blend;
    }

    // Sample batches (with replacement) and build the three augmented views.
    for (int k = 0; k < cfg.labeled_batch; ++k) {
      int idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_lab)));
      augment_weak(labeled.values.row(idx), x_weak.row(k));
      y_lab[static_cast<std::size_t>(k)] = labeled.labels[static_cast<std::size_t>(idx)];
    }
    for (int k = 0; k < cfg.unlabeled_batch; ++k) {
      int idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_unl)));
      augment_weak(data.unlabeled.row(idx), u_weak.row(k));
      augment_strong(data.unlabeled.row(idx), u_strong.row(k));
    }

    // Pseudo-label pathway: averaged model on the weak view.
    out.ema_model.set_params(ema_params);
    Matrix z_u = out.ema_model.forward(u_weak);
    Matrix q;
    std::vector<int> hard;
    if (cfg.method == Method::kDa) {
      Matrix q_raw = softmax_rows(z_u);
      // Track the model's own marginal before alignment.
      for (int c = 0; c < n_classes; ++c) {
        double mean = 0.0;
        for (int i = 0; i < q_raw.rows(); ++i) mean += q_raw(i, c);
        mean /= static_cast<double>(q_raw.rows());
        da_marginal[static_cast<std::size_t>(c)] =
            cfg.da_marginal_decay * da_marginal[static_cast<std::size_t>(c)] +
            (1.0 - cfg.da_marginal_decay) * mean;
      }
      q = da_refine(q_raw, da_marginal, da_target);
      hard = row_argmax(q);
    } else {
      auto labeled_q = pseudo_label(z_u, pi);
      q = std::move(labeled_q.first);
      hard = std::move(labeled_q.second);
    }

    // Training pathway: live model on the strong view.
    Matrix p_strong = softmax_rows(out.model.forward(u_strong));
    std::vector<int> pred = row_argmax(p_strong);
    std::vector<std::uint8_t> mask = select_mask(q, pred, tau);

    std::fill(grad.begin(), grad.end(), 0.0);
    double labeled_loss = out.model.ce_loss_and_grad(x_weak, y_lab, w_lab, &grad);
    for (int k = 0; k < cfg.unlabeled_batch; ++k)
      w_unl[static_cast<std::size_t>(k)] =
          mask[static_cast<std::size_t>(k)]
              ? cfg.unlabeled_weight / static_cast<double>(cfg.unlabeled_batch)
              : 0.0;
    double unlabeled_loss = out.model.ce_loss_and_grad(u_strong, hard, w_unl, &grad);
    if (!std::isfinite(labeled_loss) || !std::isfinite(unlabeled_loss))
      throw std::runtime_error("training diverged: non-finite loss at iteration " +
                               std::to_string(iter));
    out.model.sgd_step(grad, cfg.learning_rate);
    for (double v : out.model.params())
      if (!std::isfinite(v))
        throw std::runtime_error(
            "training diverged: non-finite parameters at iteration " +
            std::to_string(iter));
    ema_blend(ema_params, out.model.params(), cfg.model_ema_decay);

    if (record_metrics) out.losses.push_back({iter, labeled_loss, unlabeled_loss});

    // Count-scaled cutoff refresh from the full pool.
    if (cfg.method == Method::kFlexLike && iter % cfg.flex_update_every == 0) {
      out.ema_model.set_params(ema_params);
      Matrix z_pool = out.ema_model.forward(data.unlabeled);
      Matrix q_pool = softmax_rows(z_pool);
      std::vector<long long> counts(static_cast<std::size_t>(n_classes), 0);
      for (int i = 0; i < q_pool.rows(); ++i) {
        const double* row = q_pool.row(i);
        int p = argmax_row(row, n_classes);
        if (row[p] >= cfg.flex_tau_base) ++counts[static_cast<std::size_t>(p)];
      }
      tau = flex_like_thresholds(counts, cfg.flex_tau_base);
    }

    // Estimation event: fit offsets and thresholds on the holdout and blend
    // them into the schedule.
    if (holdout != nullptr) {
      std::optional<int> event = estimation_event(iter, ccfg);
      if (event) {
        out.ema_model.set_params(ema_params);
        LabeledBatch val;
        val.values = out.ema_model.forward(holdout->values);
        val.labels = holdout->labels;
        ClassWeights weights =
            cfg.threshold_uniform_weights
                ? ClassWeights::uniform(n_classes)
                : ClassWeights::inverse_frequency(holdout->labels, n_classes);
        auto [pi_star, report] = estimate_step(val, weights, cfg.offsets, cfg.thresholds,
                                               cfg.thresholds_on_refined);
        out.state.record_estimate(pi_star, report.tau, ccfg.eta_pi, ccfg.eta_tau);
      }
    }

    if (record_metrics && (iter % cfg.eval_every == 0 || iter == cfg.total_iters))
      eval_metrics(iter);
  }

  out.ema_model.set_params(ema_params);
  out.da_marginal = da_marginal;
  return out;
}

}  // namespace detail

// Run one simulated semi-supervised training session on a prebuilt dataset.
// Reproducible: the whole run is a deterministic function of (data, cfg).
inline RunRecord train(const SynthDataset& data, const TrainConfig& cfg) {
  check_train_config(cfg);
  const int n_classes = data.oracle.n_classes();
  check_batch(data.labeled, n_classes, "train(labeled)");
  check_batch(data.test, n_classes, "train(test)");
  if (static_cast<int>(data.oracle.true_labels.size()) != data.unlabeled.rows())
    throw std::invalid_argument("train: oracle/unlabeled size mismatch");

  Curriculum schedule;
  if (cfg.method == Method::kSeval) {
    if (cfg.preset_curriculum) {
      schedule = *cfg.preset_curriculum;
    } else {
      auto halves = partition(data.labeled, derive_seed(cfg.seed, seed_tag::kPartition),
                              cfg.stratified_partition);
      detail::LoopOutput est = detail::run_ssl_loop(
          data, halves.first, &halves.second, nullptr, OffsetVector::ones(n_classes),
          cfg, false, seed_tag::kEstimationInit, seed_tag::kEstimationLoop);
      schedule = est.state.to_curriculum();
    }
    if (schedule.length_L != cfg.curriculum.length_L ||
        static_cast<int>(schedule.steps.size()) != cfg.curriculum.length_L)
      throw std::runtime_error("train: schedule must hold exactly length_L steps");
    for (std::size_t k = 0; k < schedule.steps.size(); ++k) {
      if (schedule.steps[k].l != static_cast<int>(k) + 1 ||
          schedule.steps[k].pi.size() != n_classes ||
          schedule.steps[k].tau.size() != n_classes)
        throw std::runtime_error("train: malformed schedule step");
    }
  }

  OffsetVector method_pi = OffsetVector::ones(n_classes);
  if (cfg.method == Method::kLa) {
    std::vector<long long> lab_counts(static_cast<std::size_t>(n_classes), 0);
    for (int y : data.labeled.labels) ++lab_counts[static_cast<std::size_t>(y)];
    for (long long c : lab_counts)
      if (c == 0)
        throw std::invalid_argument("train: la needs every class in the labeled set");
    method_pi = la_offsets(lab_counts, cfg.la_lambda);
  }

  detail::LoopOutput main_loop = detail::run_ssl_loop(
      data, data.labeled, nullptr,
      cfg.method == Method::kSeval ? &schedule : nullptr, method_pi, cfg, true,
      seed_tag::kReplayInit, seed_tag::kReplayLoop);

  RunRecord rec;
  rec.n_classes = n_classes;
  rec.metrics = std::move(main_loop.metrics);
  rec.losses = std::move(main_loop.losses);
  rec.curriculum = schedule;

  switch (cfg.method) {
    case Method::kSeval: rec.pi_final_raw = schedule.pi_final_raw; break;
    case Method::kLa: rec.pi_final_raw = method_pi; break;
    default: rec.pi_final_raw = OffsetVector::ones(n_classes); break;
  }

  Matrix z_test = main_loop.ema_model.forward(data.test.values);
  std::vector<int> raw_pred = row_argmax(z_test);
  rec.test_accuracy = accuracy(raw_pred, data.test.labels);
  rec.test_balanced_accuracy = balanced_accuracy(raw_pred, data.test.labels, n_classes);
  std::vector<int> adj_pred = post_hoc_adjust(z_test, rec.pi_final_raw);
  rec.adjusted_test_accuracy = accuracy(adj_pred, data.test.labels);
  rec.adjusted_test_balanced_accuracy = balanced_accuracy(adj_pred, data.test.labels, n_classes);
  return rec;
}

inline RunRecord train(const SynthSpec& spec, const TrainConfig& cfg) {
  return train(generate(spec), cfg);
}

}  // namespace seval
