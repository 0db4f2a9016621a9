#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seval/pseudo_labels.hpp"
#include "seval/thresholds.hpp"

namespace seval {

// Ground truth for an unlabeled pool: the hidden labels and per-class counts.
// Available in simulation; in real pipelines it comes from a held-out
// evaluation file.
struct OracleUnlabeled {
  std::vector<int> true_labels;
  std::vector<long long> class_counts;

  int size() const { return static_cast<int>(true_labels.size()); }
  int n_classes() const { return static_cast<int>(class_counts.size()); }

  static OracleUnlabeled from_labels(const std::vector<int>& labels, int n_classes) {
    OracleUnlabeled o;
    o.true_labels = labels;
    o.class_counts.assign(static_cast<std::size_t>(n_classes), 0);
    for (int y : labels) {
      if (y < 0 || y >= n_classes)
        throw std::invalid_argument("OracleUnlabeled: label out of range");
      ++o.class_counts[static_cast<std::size_t>(y)];
    }
    return o;
  }
};

// Pseudo-label improvement of `new_labels` over `old_labels`: the plain
// accuracy change plus a per-class term that weights each class equally
// (so tail-class progress is visible through head-class noise). Classes
// with no true samples are skipped in the per-class term. Antisymmetric:
// swapping old and new flips the sign.
inline double gain(const std::vector<int>& old_labels,
                   const std::vector<int>& new_labels,
                   const OracleUnlabeled& oracle) {
  const std::size_t m = oracle.true_labels.size();
  if (old_labels.size() != m || new_labels.size() != m)
    throw std::invalid_argument("gain: label-vector length mismatch");
  if (m == 0) throw std::invalid_argument("gain: empty oracle");
  const int n_classes = oracle.n_classes();

  long long sample_diff = 0;
  std::vector<long long> class_diff(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < m; ++i) {
    int y = oracle.true_labels[i];
    bool old_ok = old_labels[i] == y;
    bool new_ok = new_labels[i] == y;
    sample_diff += static_cast<long long>(new_ok) - static_cast<long long>(old_ok);
    // A correct pseudo-label for class c is, by definition, also predicted c.
    if (new_ok) ++class_diff[static_cast<std::size_t>(y)];
    if (old_ok) --class_diff[static_cast<std::size_t>(y)];
  }

  double g = static_cast<double>(sample_diff) / static_cast<double>(m);
  for (int c = 0; c < n_classes; ++c) {
    long long mc = oracle.class_counts[static_cast<std::size_t>(c)];
    if (mc == 0) continue;
    g += static_cast<double>(class_diff[static_cast<std::size_t>(c)]) /
         (static_cast<double>(mc) * static_cast<double>(n_classes));
  }
  return g;
}

// Running mean of a gain stream: out[j] = (g_0 + ... + g_j) / (j + 1).
inline std::vector<double> cumulative_gain(const std::vector<double>& gains) {
  std::vector<double> out(gains.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < gains.size(); ++j) {
    sum += gains[j];
    out[j] = sum / static_cast<double>(j + 1);
  }
  return out;
}

// Selected-pseudo-label health under class-balanced sample weights 1/m_c.
//   quantity     weighted share of the pool that is selected AND correct
//   quality      weighted accuracy within the selected set (0 when empty)
//   correctness  quantity * quality
struct Correctness {
  double quantity = 0.0;
  double quality = 0.0;
  double correctness = 0.0;
};

inline Correctness correctness(const PseudoBatch& pseudo,
                               const OracleUnlabeled& oracle,
                               const ThresholdVector& tau) {
  const int m = pseudo.size();
  if (m != oracle.size())
    throw std::invalid_argument("correctness: batch/oracle size mismatch");
  if (pseudo.q.cols() != oracle.n_classes() || tau.size() != oracle.n_classes())
    throw std::invalid_argument("correctness: class-count mismatch");

  // Recompute the mask from q, pred_labels and tau so the result is always
  // consistent with the thresholds passed in.
  std::vector<std::uint8_t> mask = select_mask(pseudo.q, pseudo.pred_labels, tau);

  double total_w = 0.0;
  double selected_w = 0.0;
  double selected_correct_w = 0.0;
  for (int i = 0; i < m; ++i) {
    int y = oracle.true_labels[static_cast<std::size_t>(i)];
    long long mc = oracle.class_counts[static_cast<std::size_t>(y)];
    if (mc <= 0) throw std::invalid_argument("correctness: zero class count for present class");
    double w = 1.0 / static_cast<double>(mc);
    total_w += w;
    if (!mask[static_cast<std::size_t>(i)]) continue;
    selected_w += w;
    if (pseudo.hard_labels[static_cast<std::size_t>(i)] == y) selected_correct_w += w;
  }

  Correctness out;
  out.quantity = selected_correct_w / total_w;
  out.quality = selected_w > 0.0 ? selected_correct_w / selected_w : 0.0;
  out.correctness = out.quantity * out.quality;
  return out;
}

// Per-class precision/recall. Precision is undefined (nullopt) for classes
// never predicted; recall is undefined for classes with no true samples.
struct ClasswisePR {
  std::vector<std::optional<double>> precision;
  std::vector<std::optional<double>> recall;
};

inline ClasswisePR classwise_pr(const std::vector<int>& pred,
                                const std::vector<int>& truth, int n_classes) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("classwise_pr: length mismatch");
  std::vector<long long> tp(static_cast<std::size_t>(n_classes), 0);
  std::vector<long long> pred_count(static_cast<std::size_t>(n_classes), 0);
  std::vector<long long> true_count(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    int p = pred[i];
    int y = truth[i];
    if (p < 0 || p >= n_classes || y < 0 || y >= n_classes)
      throw std::invalid_argument("classwise_pr: label out of range");
    ++pred_count[static_cast<std::size_t>(p)];
    ++true_count[static_cast<std::size_t>(y)];
    if (p == y) ++tp[static_cast<std::size_t>(p)];
  }
  ClasswisePR out;
  out.precision.resize(static_cast<std::size_t>(n_classes));
  out.recall.resize(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    auto cc = static_cast<std::size_t>(c);
    if (pred_count[cc] > 0)
      out.precision[cc] = static_cast<double>(tp[cc]) / static_cast<double>(pred_count[cc]);
    if (true_count[cc] > 0)
      out.recall[cc] = static_cast<double>(tp[cc]) / static_cast<double>(true_count[cc]);
  }
  return out;
}

// Class learning-status taxonomy from per-class precision/recall. "High"
// means strictly above the unweighted mean over classes where the value is
// defined; undefined values count as low.
//   1  high recall, low precision   (over-selected head behaviour)
//   2  low recall, high precision   (under-selected tail behaviour)
//   3  high recall, high precision  (well learned)
//   4  low recall, low precision    (poorly learned)
enum class PerformanceCase : int {
  kHighRecallLowPrecision = 1,
  kLowRecallHighPrecision = 2,
  kHighRecallHighPrecision = 3,
  kLowRecallLowPrecision = 4,
};

inline std::vector<PerformanceCase> case_taxonomy(const ClasswisePR& pr) {
  if (pr.precision.size() != pr.recall.size())
    throw std::invalid_argument("case_taxonomy: precision/recall length mismatch");
  auto mean_defined = [](const std::vector<std::optional<double>>& v) {
    double sum = 0.0;
    int n = 0;
    for (const auto& x : v)
      if (x) {
        sum += *x;
        ++n;
      }
    if (n == 0) throw std::invalid_argument("case_taxonomy: no class with a defined value");
    return sum / n;
  };
  double mean_p = mean_defined(pr.precision);
  double mean_r = mean_defined(pr.recall);

  std::vector<PerformanceCase> out(pr.precision.size());
  for (std::size_t c = 0; c < pr.precision.size(); ++c) {
    bool high_p = pr.precision[c] && *pr.precision[c] > mean_p;
    bool high_r = pr.recall[c] && *pr.recall[c] > mean_r;
    if (high_r && !high_p)
      out[c] = PerformanceCase::kHighRecallLowPrecision;
    else if (!high_r && high_p)
      out[c] = PerformanceCase::kLowRecallHighPrecision;
    else if (high_r && high_p)
      out[c] = PerformanceCase::kHighRecallHighPrecision;
    else
      out[c] = PerformanceCase::kLowRecallLowPrecision;
  }
  return out;
}

// Label-free precision estimate from probability rows:
//   numerator   sum of max-confidences of the rows whose argmax is c
//   denominator sum of the class-c probability over all rows
// nullopt when the denominator is zero.
inline std::vector<std::optional<double>> estimated_precision(const Matrix& probs) {
  check_prob_rows(probs, "estimated_precision");
  const int n_classes = probs.cols();
  std::vector<double> num(static_cast<std::size_t>(n_classes), 0.0);
  std::vector<double> den(static_cast<std::size_t>(n_classes), 0.0);
  for (int i = 0; i < probs.rows(); ++i) {
    const double* row = probs.row(i);
    int p = argmax_row(row, n_classes);
    num[static_cast<std::size_t>(p)] += row[p];
    for (int c = 0; c < n_classes; ++c) den[static_cast<std::size_t>(c)] += row[c];
  }
  std::vector<std::optional<double>> out(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    auto cc = static_cast<std::size_t>(c);
    if (den[cc] > 0.0) out[cc] = num[cc] / den[cc];
  }
  return out;
}

// ---- CSV export --------------------------------------------------------

// One evaluation row of a training run. Optional fields print as empty cells.
struct MetricsRow {
  long long iter = 0;
  double gain = 0.0;
  double cum_gain = 0.0;
  double quantity = 0.0;
  double quality = 0.0;
  double correctness = 0.0;
  std::optional<double> balanced_accuracy;
  std::optional<double> accuracy;
  std::vector<std::optional<double>> precision;  // per class
  std::vector<std::optional<double>> recall;     // per class
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string metrics_csv_header(int n_classes) {
  std::string h = "iter,gain,cum_gain,quantity,quality,correctness,balanced_accuracy,accuracy";
  for (int c = 0; c < n_classes; ++c) h += ",precision_" + std::to_string(c);
  for (int c = 0; c < n_classes; ++c) h += ",recall_" + std::to_string(c);
  return h;
}

inline std::string metrics_csv_row(const MetricsRow& row, int n_classes) {
  if (static_cast<int>(row.precision.size()) != n_classes ||
      static_cast<int>(row.recall.size()) != n_classes)
    throw std::invalid_argument("metrics_csv_row: per-class column count mismatch");
  auto opt = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  std::string s = std::to_string(row.iter);
  s += "," + format_double(row.gain);
  s += "," + format_double(row.cum_gain);
  s += "," + format_double(row.quantity);
  s += "," + format_double(row.quality);
  s += "," + format_double(row.correctness);
  s += "," + opt(row.balanced_accuracy);
  s += "," + opt(row.accuracy);
  for (int c = 0; c < n_classes; ++c) s += "," + opt(row.precision[static_cast<std::size_t>(c)]);
  for (int c = 0; c < n_classes; ++c) s += "," + opt(row.recall[static_cast<std::size_t>(c)]);
  return s;
}

// Plain and class-balanced accuracy of predictions against truth.
inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("accuracy: bad input");
  long long ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == truth[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

// Mean per-class recall over classes with true samples.
inline double balanced_accuracy(const std::vector<int>& pred,
                                const std::vector<int>& truth, int n_classes) {
  ClasswisePR pr = classwise_pr(pred, truth, n_classes);
  double sum = 0.0;
  int n = 0;
  for (const auto& r : pr.recall)
    if (r) {
      sum += *r;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("balanced_accuracy: no class has true samples");
  return sum / n;
}

}  // namespace seval
