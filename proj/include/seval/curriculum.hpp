#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "seval/matrix.hpp"
#include "seval/offsets.hpp"
#include "seval/rng.hpp"
#include "seval/thresholds.hpp"

namespace seval {

struct CurriculumConfig {
  int length_L = 50;            // number of curriculum steps over a run
  long long total_iters_T = 20000;
  double eta_pi = 0.9;          // blend weight kept from the previous step
  double eta_tau = 0.9;
};

inline void check_curriculum_config(const CurriculumConfig& cfg, const char* where) {
  if (cfg.length_L < 1) throw std::invalid_argument(std::string(where) + ": length_L must be >= 1");
  if (cfg.total_iters_T < cfg.length_L)
    throw std::invalid_argument(std::string(where) + ": total_iters_T must be >= length_L");
  if (!(cfg.eta_pi >= 0.0 && cfg.eta_pi <= 1.0 && cfg.eta_tau >= 0.0 && cfg.eta_tau <= 1.0))
    throw std::invalid_argument(std::string(where) + ": blend weights must lie in [0, 1]");
}

struct CurriculumStep {
  int l = 0;  // 1-based step index
  OffsetVector pi;
  ThresholdVector tau;
};

// The persisted schedule: the interchange between an estimation run and a
// replay run. `pi_final_raw` is the last un-blended offset estimate, used for
// adjusting predictions after training.
struct Curriculum {
  int length_L = 0;
  std::vector<CurriculumStep> steps;
  OffsetVector pi_final_raw;
};

// Elementwise v_out = eta * prev + (1 - eta) * next.
inline std::vector<double> ema_update(const std::vector<double>& prev,
                                      const std::vector<double>& next,
                                      double eta) {
  if (prev.size() != next.size())
    throw std::invalid_argument("ema_update: length mismatch");
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("ema_update: eta must lie in [0, 1]");
  std::vector<double> out(prev.size());
  for (std::size_t i = 0; i < prev.size(); ++i)
    out[i] = eta * prev[i] + (1.0 - eta) * next[i];
  return out;
}

// Mutable schedule state held during an estimation run. Starts neutral:
// offsets all ones, thresholds all 0.95 (the conventional fixed cutoff) until
// the first estimate arrives.
struct CurriculumState {
  int step_l = 0;
  OffsetVector pi_blend;
  ThresholdVector tau_blend;
  OffsetVector pi_raw_last;
  std::vector<CurriculumStep> history;

  static CurriculumState initial(int n_classes) {
    CurriculumState s;
    s.pi_blend = OffsetVector::ones(n_classes);
    s.tau_blend = ThresholdVector::constant(n_classes, 0.95);
    s.pi_raw_last = OffsetVector::ones(n_classes);
    return s;
  }

  // Blend a fresh raw estimate into the schedule and record the step.
  // Blended offsets are re-gauge-fixed: the elementwise blend of two
  // geometric-mean-1 vectors is not itself gauge-fixed.
  void record_estimate(const OffsetVector& pi_raw, const ThresholdVector& tau_raw,
                       double eta_pi, double eta_tau) {
    OffsetVector pi_new{ema_update(pi_blend.pi, pi_raw.pi, eta_pi)};
    pi_blend = gauge_fix(pi_new);
    tau_blend = ThresholdVector{ema_update(tau_blend.tau, tau_raw.tau, eta_tau)};
    pi_raw_last = pi_raw;
    ++step_l;
    history.push_back({step_l, pi_blend, tau_blend});
  }

  Curriculum to_curriculum() const {
    Curriculum c;
    c.length_L = step_l;
    c.steps = history;
    c.pi_final_raw = pi_raw_last;
    return c;
  }
};

// Split a labeled set into two halves (train half first, validation half
// second), deterministically from the seed. Stratified mode splits every
// class as evenly as possible: the extra sample of odd-count classes goes
// alternately to the validation and the train side (first odd class by index
// feeds validation), except single-sample classes, which always land on the
// validation side so inverse-frequency weights stay defined there. With many
// single-sample classes that guarantee wins over the halves-differ-by-at-
// most-1 balance.
inline std::pair<LabeledBatch, LabeledBatch> partition(const LabeledBatch& labeled,
                                                       std::uint64_t seed,
                                                       bool stratified = true) {
  const int n = labeled.size();
  if (n < 2) throw std::invalid_argument("partition: need at least 2 samples");
  int n_classes = 0;
  for (int y : labeled.labels) {
    if (y < 0) throw std::invalid_argument("partition: negative label");
    n_classes = std::max(n_classes, y + 1);
  }

  Rng rng(seed);
  std::vector<int> train_idx;
  std::vector<int> val_idx;

  if (stratified) {
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(n_classes));
    for (int i = 0; i < n; ++i)
      by_class[static_cast<std::size_t>(labeled.labels[static_cast<std::size_t>(i)])].push_back(i);
    bool extra_to_val = true;
    for (int c = 0; c < n_classes; ++c) {
      auto& idx = by_class[static_cast<std::size_t>(c)];
      if (idx.empty()) continue;
      rng.shuffle(idx);
      std::size_t nc = idx.size();
      std::size_t to_train;
      if (nc == 1) {
        to_train = 0;  // the lone sample must be visible to the validation side
        extra_to_val = !extra_to_val;
      } else if (nc % 2 == 0) {
        to_train = nc / 2;
      } else {
        to_train = extra_to_val ? nc / 2 : nc / 2 + 1;
        extra_to_val = !extra_to_val;
      }
      for (std::size_t k = 0; k < nc; ++k)
        (k < to_train ? train_idx : val_idx).push_back(idx[k]);
    }
  } else {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    std::size_t to_train = idx.size() / 2;
    train_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(to_train));
    val_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(to_train), idx.end());
  }

  auto gather = [&](const std::vector<int>& idx) {
    LabeledBatch out;
    out.values = Matrix(static_cast<int>(idx.size()), labeled.values.cols());
    out.labels.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (int j = 0; j < labeled.values.cols(); ++j)
        out.values(static_cast<int>(k), j) = labeled.values(idx[k], j);
      out.labels[k] = labeled.labels[static_cast<std::size_t>(idx[k])];
    }
    return out;
  };
  return {gather(train_idx), gather(val_idx)};
}

// One estimation step: fit offsets on the holdout logits, fit thresholds on
// the refined probabilities (softmax of z - log pi*), then floor the offsets
// of any class the threshold fit flagged as starved to min_j pi_j and re-fix
// the gauge. `thresholds_on_refined = false` fits thresholds on the raw
// probabilities instead.
inline std::pair<OffsetVector, ThresholdFitReport> estimate_step(
    const LabeledBatch& holdout, const ClassWeights& weights,
    const OffsetFitConfig& offset_cfg, const ThresholdFitConfig& threshold_cfg,
    bool thresholds_on_refined = true) {
  OffsetFitResult fit = fit_offsets(holdout, offset_cfg);

  LabeledBatch preds;
  preds.values = softmax_rows(thresholds_on_refined
                                  ? apply_offsets(holdout.values, fit.pi)
                                  : holdout.values);
  preds.labels = holdout.labels;
  ThresholdFitReport report = fit_thresholds(preds, weights, threshold_cfg);

  OffsetVector pi = fit.pi;
  if (!report.pi_floor_classes.empty()) {
    double floor = *std::min_element(pi.pi.begin(), pi.pi.end());
    for (int c : report.pi_floor_classes) pi.pi[static_cast<std::size_t>(c)] = floor;
    pi = gauge_fix(pi);
  }
  return {pi, report};
}

// Step index during the replay run: iter in [1, T] maps onto [1, L] as
// ceil(iter * L / T), monotone and covering every step.
inline int replay_step_index(long long iter, const CurriculumConfig& cfg) {
  check_curriculum_config(cfg, "replay_step_index");
  if (iter < 1 || iter > cfg.total_iters_T)
    throw std::invalid_argument("replay_step_index: iter out of range");
  long long num = iter * static_cast<long long>(cfg.length_L);
  return static_cast<int>((num + cfg.total_iters_T - 1) / cfg.total_iters_T);
}

// Estimation events during the estimation run: every floor(T/L) iterations,
// with the L-th (final) event pinned to iter = T so a non-divisible T still
// produces exactly L schedule entries. Returns the step index l when iter is
// an event, nullopt otherwise.
inline std::optional<int> estimation_event(long long iter, const CurriculumConfig& cfg) {
  check_curriculum_config(cfg, "estimation_event");
  if (iter < 1 || iter > cfg.total_iters_T)
    throw std::invalid_argument("estimation_event: iter out of range");
  const long long interval = cfg.total_iters_T / cfg.length_L;
  if (iter == cfg.total_iters_T) return cfg.length_L;
  if (iter % interval == 0) {
    long long l = iter / interval;
    if (l <= cfg.length_L - 1) return static_cast<int>(l);
  }
  return std::nullopt;
}

}  // namespace seval
