#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "seval/matrix.hpp"

namespace seval {

// Per-class confidence thresholds in [0, 1].
struct ThresholdVector {
  std::vector<double> tau;

  int size() const { return static_cast<int>(tau.size()); }

  static ThresholdVector constant(int n, double value) {
    return ThresholdVector{std::vector<double>(static_cast<std::size_t>(n), value)};
  }
};

inline void check_thresholds(const ThresholdVector& v, const char* where) {
  if (v.tau.empty()) throw std::invalid_argument(std::string(where) + ": empty thresholds");
  for (double t : v.tau)
    if (!(t >= 0.0 && t <= 1.0))
      throw std::invalid_argument(std::string(where) + ": thresholds must lie in [0, 1]");
}

// Per-class sample weights omega_c applied through the true label of each
// validation sample. Uniform weights reproduce plain counting; inverse
// frequency (1/k_c) makes an imbalanced validation set act balanced.
struct ClassWeights {
  std::vector<double> omega;

  int size() const { return static_cast<int>(omega.size()); }

  static ClassWeights uniform(int n) {
    return ClassWeights{std::vector<double>(static_cast<std::size_t>(n), 1.0)};
  }

  // 1/k_c from the label vector. Classes with no samples get weight 1; the
  // value never enters any sum because no sample carries that label.
  static ClassWeights inverse_frequency(const std::vector<int>& labels, int n_classes) {
    std::vector<long long> counts(static_cast<std::size_t>(n_classes), 0);
    for (int y : labels) {
      if (y < 0 || y >= n_classes)
        throw std::invalid_argument("ClassWeights: label out of range");
      ++counts[static_cast<std::size_t>(y)];
    }
    ClassWeights w;
    w.omega.resize(static_cast<std::size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c)
      w.omega[static_cast<std::size_t>(c)] =
          counts[static_cast<std::size_t>(c)] > 0
              ? 1.0 / static_cast<double>(counts[static_cast<std::size_t>(c)])
              : 1.0;
    return w;
  }
};

inline void check_weights(const ClassWeights& w, int n_classes, const char* where) {
  if (w.size() != n_classes)
    throw std::invalid_argument(std::string(where) + ": weight/class-count mismatch");
  for (double v : w.omega)
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string(where) + ": weights must be positive and finite");
}

struct ThresholdFitConfig {
  double target_t = 0.75;  // desired selected-accuracy level
  int group_size = 1;      // B consecutive classes (sorted by true count desc) share a threshold
  int min_predicted_e1 = 10;  // group share cutoff: weighted predicted share >= |group|/(e1*C)
  int min_true_e2 = 10;       // every member class needs at least e2 true samples
  bool pi_floor_rule = true;  // flag starved groups for the offset floor
};

inline void check_threshold_config(const ThresholdFitConfig& cfg, int n_classes,
                                   const char* where) {
  if (!(cfg.target_t > 0.0 && cfg.target_t < 1.0))
    throw std::invalid_argument(std::string(where) + ": target_t must lie in (0, 1)");
  if (cfg.group_size < 1 || cfg.group_size > n_classes)
    throw std::invalid_argument(std::string(where) + ": group_size out of range");
  if (cfg.min_predicted_e1 < 1 || cfg.min_true_e2 < 1)
    throw std::invalid_argument(std::string(where) + ": e1 and e2 must be >= 1");
}

struct ThresholdFitReport {
  ThresholdVector tau;
  std::vector<int> fallback_classes;  // threshold forced to 0
  std::vector<int> pi_floor_classes;  // offset must be floored to min_j pi_j
};

// Weighted accuracy of the samples predicted as class_c whose max probability
// strictly exceeds tau_c. Empty selection -> nullopt.
inline std::optional<double> selected_accuracy(const LabeledBatch& preds,
                                               const ClassWeights& weights,
                                               int class_c, double tau_c) {
  const int n_classes = preds.values.cols();
  check_prob_rows(preds.values, "selected_accuracy");
  check_batch(preds, n_classes, "selected_accuracy");
  check_weights(weights, n_classes, "selected_accuracy");
  if (class_c < 0 || class_c >= n_classes)
    throw std::invalid_argument("selected_accuracy: class index out of range");

  double selected = 0.0;
  double correct = 0.0;
  for (int i = 0; i < preds.values.rows(); ++i) {
    const double* row = preds.values.row(i);
    int pred = argmax_row(row, n_classes);
    if (pred != class_c) continue;
    double maxprob = row[pred];
    if (!(maxprob > tau_c)) continue;
    double w = weights.omega[static_cast<std::size_t>(preds.labels[static_cast<std::size_t>(i)])];
    selected += w;
    if (preds.labels[static_cast<std::size_t>(i)] == class_c) correct += w;
  }
  if (selected == 0.0) return std::nullopt;
  return correct / selected;
}

// Threshold candidates for a set of max probabilities: 0, then the midpoints
// between consecutive distinct sorted values, ascending. The selected-sample
// set is constant between consecutive data values, so these candidates cover
// every reachable selection.
inline std::vector<double> candidate_thresholds(std::vector<double> maxprobs) {
  for (double v : maxprobs)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("candidate_thresholds: values must lie in [0, 1]");
  std::sort(maxprobs.begin(), maxprobs.end());
  maxprobs.erase(std::unique(maxprobs.begin(), maxprobs.end()), maxprobs.end());
  std::vector<double> out;
  out.push_back(0.0);
  for (std::size_t i = 1; i < maxprobs.size(); ++i)
    out.push_back(0.5 * (maxprobs[i - 1] + maxprobs[i]));
  return out;
}

// Fit one threshold per class so the weighted accuracy of the selected
// samples sits as close to target_t as possible.
//
// Classes are ordered by true-sample count descending (ties by index) and
// chunked into groups of group_size consecutive classes; the last group
// absorbs any remainder. Every class in a group shares the group threshold.
// A group falls back to threshold 0 when its weighted selected accuracy at
// tau = 0 is already <= target_t (no threshold can help), and additionally
// gets flagged for the offset floor when it is starved: weighted predicted
// share below |group|/(e1*C) or any member class with fewer than e2 true
// samples.
inline ThresholdFitReport fit_thresholds(const LabeledBatch& preds,
                                         const ClassWeights& weights,
                                         const ThresholdFitConfig& cfg) {
  const int n = preds.values.rows();
  const int n_classes = preds.values.cols();
  if (n == 0) throw std::invalid_argument("fit_thresholds: empty validation set");
  check_prob_rows(preds.values, "fit_thresholds");
  check_batch(preds, n_classes, "fit_thresholds");
  check_weights(weights, n_classes, "fit_thresholds");
  check_threshold_config(cfg, n_classes, "fit_thresholds");

  std::vector<int> pred(static_cast<std::size_t>(n));
  std::vector<double> maxprob(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(n));
  double total_weight = 0.0;
  std::vector<long long> true_count(static_cast<std::size_t>(n_classes), 0);
  for (int i = 0; i < n; ++i) {
    const double* row = preds.values.row(i);
    pred[static_cast<std::size_t>(i)] = argmax_row(row, n_classes);
    maxprob[static_cast<std::size_t>(i)] = row[pred[static_cast<std::size_t>(i)]];
    w[static_cast<std::size_t>(i)] = weights.omega[static_cast<std::size_t>(preds.labels[static_cast<std::size_t>(i)])];
    total_weight += w[static_cast<std::size_t>(i)];
    ++true_count[static_cast<std::size_t>(preds.labels[static_cast<std::size_t>(i)])];
  }

  // Group layout: classes sorted by true count descending, index ascending on
  // ties; the last group takes the remainder when group_size does not divide
  // the class count.
  std::vector<int> order(static_cast<std::size_t>(n_classes));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return true_count[static_cast<std::size_t>(a)] > true_count[static_cast<std::size_t>(b)];
  });
  std::vector<std::vector<int>> groups;
  for (int start = 0; start < n_classes; start += cfg.group_size) {
    int end = start + cfg.group_size;
    if (n_classes - end < cfg.group_size) end = n_classes;  // absorb remainder
    groups.emplace_back(order.begin() + start, order.begin() + end);
    if (end == n_classes) break;
  }

  ThresholdFitReport report;
  report.tau.tau.assign(static_cast<std::size_t>(n_classes), 0.0);

  for (const std::vector<int>& members : groups) {
    std::vector<bool> in_group(static_cast<std::size_t>(n_classes), false);
    for (int c : members) in_group[static_cast<std::size_t>(c)] = true;

    // (maxprob, weight, weighted-correct) of samples predicted inside the group,
    // sorted ascending by maxprob so a threshold corresponds to a suffix.
    struct Entry {
      double maxprob;
      double weight;
      double correct;
    };
    std::vector<Entry> entries;
    double predicted_weight = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!in_group[static_cast<std::size_t>(pred[static_cast<std::size_t>(i)])]) continue;
      double correct = preds.labels[static_cast<std::size_t>(i)] == pred[static_cast<std::size_t>(i)]
                           ? w[static_cast<std::size_t>(i)]
                           : 0.0;
      entries.push_back({maxprob[static_cast<std::size_t>(i)], w[static_cast<std::size_t>(i)], correct});
      predicted_weight += w[static_cast<std::size_t>(i)];
    }

    bool starved = predicted_weight <
                   total_weight * static_cast<double>(members.size()) /
                       (static_cast<double>(cfg.min_predicted_e1) * static_cast<double>(n_classes));
    for (int c : members)
      if (true_count[static_cast<std::size_t>(c)] < cfg.min_true_e2) starved = true;

    if (starved) {
      for (int c : members) {
        report.fallback_classes.push_back(c);
        if (cfg.pi_floor_rule) report.pi_floor_classes.push_back(c);
      }
      continue;  // tau stays 0
    }

    double correct_weight = 0.0;
    for (const Entry& e : entries) correct_weight += e.correct;
    double alpha = correct_weight / predicted_weight;  // predicted_weight > 0: not starved
    if (!(alpha > cfg.target_t)) {
      for (int c : members) report.fallback_classes.push_back(c);
      continue;  // accuracy already at or below target; tau stays 0
    }

    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.maxprob < b.maxprob; });
    std::vector<double> values(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) values[i] = entries[i].maxprob;
    std::vector<double> candidates = candidate_thresholds(values);

    // Suffix sums: selection at threshold tau is the suffix of entries with
    // maxprob > tau.
    std::vector<double> suffix_w(entries.size() + 1, 0.0);
    std::vector<double> suffix_c(entries.size() + 1, 0.0);
    for (std::size_t i = entries.size(); i-- > 0;) {
      suffix_w[i] = suffix_w[i + 1] + entries[i].weight;
      suffix_c[i] = suffix_c[i + 1] + entries[i].correct;
    }

    double best_tau = 0.0;
    double best_err = std::numeric_limits<double>::infinity();
    for (double tau : candidates) {
      std::size_t first = static_cast<std::size_t>(
          std::upper_bound(values.begin(), values.end(), tau) - values.begin());
      double s = suffix_w[first];
      if (s == 0.0) continue;  // selected accuracy undefined at this candidate
      double err = std::abs(suffix_c[first] / s - cfg.target_t);
      if (err < best_err) {  // ties keep the smaller tau (candidates ascend)
        best_err = err;
        best_tau = tau;
      }
    }
    if (std::isinf(best_err)) {  // nothing selectable at any candidate
      for (int c : members) report.fallback_classes.push_back(c);
      continue;
    }
    for (int c : members) report.tau.tau[static_cast<std::size_t>(c)] = best_tau;
  }

  std::sort(report.fallback_classes.begin(), report.fallback_classes.end());
  std::sort(report.pi_floor_classes.begin(), report.pi_floor_classes.end());
  return report;
}

}  // namespace seval
