#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "seval/matrix.hpp"

namespace seval {

// Per-class refinement offsets pi. Refined logits are z_c - log(pi_c), so
// pi_c > 1 suppresses class c and pi_c < 1 boosts it. Softmax outputs are
// invariant to scaling pi by a constant, so fitted vectors are gauge-fixed
// to geometric mean 1.
struct OffsetVector {
  std::vector<double> pi;

  int size() const { return static_cast<int>(pi.size()); }

  static OffsetVector ones(int n) {
    return OffsetVector{std::vector<double>(static_cast<std::size_t>(n), 1.0)};
  }
};

inline void check_offsets(const OffsetVector& v, const char* where) {
  if (v.pi.empty()) throw std::invalid_argument(std::string(where) + ": empty offsets");
  for (double p : v.pi)
    if (!(p > 0.0) || !std::isfinite(p))
      throw std::invalid_argument(std::string(where) + ": offsets must be positive and finite");
}

// Rescale so the geometric mean is exactly 1 (log coordinates sum to 0).
inline OffsetVector gauge_fix(const OffsetVector& v) {
  check_offsets(v, "gauge_fix");
  std::vector<double> logp(v.pi.size());
  for (std::size_t i = 0; i < v.pi.size(); ++i) logp[i] = std::log(v.pi[i]);
  double mean = std::accumulate(logp.begin(), logp.end(), 0.0) /
                static_cast<double>(logp.size());
  OffsetVector out;
  out.pi.resize(v.pi.size());
  for (std::size_t i = 0; i < v.pi.size(); ++i) out.pi[i] = std::exp(logp[i] - mean);
  return out;
}

// out[i][c] = logits[i][c] - log(pi_c)
inline Matrix apply_offsets(const Matrix& logits, const OffsetVector& pi) {
  check_offsets(pi, "apply_offsets");
  if (logits.cols() != pi.size())
    throw std::invalid_argument("apply_offsets: class-count mismatch");
  if (!logits.all_finite())
    throw std::invalid_argument("apply_offsets: non-finite logits");
  Matrix out(logits.rows(), logits.cols());
  std::vector<double> logp(pi.pi.size());
  for (std::size_t c = 0; c < pi.pi.size(); ++c) logp[c] = std::log(pi.pi[c]);
  for (int i = 0; i < logits.rows(); ++i)
    for (int j = 0; j < logits.cols(); ++j)
      out(i, j) = logits(i, j) - logp[static_cast<std::size_t>(j)];
  return out;
}

struct OffsetFitConfig {
  int max_iters = 10000;
  double step_size = 1.0;    // initial gradient step, adapted by line search
  double tolerance = 1e-8;   // stop once an accepted step decreases the objective by less
  double bound_lo = -10.0;   // box constraint on each log pi_c
  double bound_hi = 10.0;
};

struct OffsetFitResult {
  OffsetVector pi;
  double objective = 0.0;  // mean cross-entropy at the returned offsets
  int iterations = 0;
  bool converged = true;   // false when max_iters ran out before the tolerance hit
};

namespace detail {

// Mean cross-entropy of softmax(z - theta) against hard labels, restricted to
// log space. Probabilities are clamped at 1e-12 before the log.
inline double offset_objective_theta(const LabeledBatch& holdout,
                                     const std::vector<double>& theta) {
  const int n = holdout.values.rows();
  const int c = holdout.values.cols();
  std::vector<double> adj(static_cast<std::size_t>(c));
  std::vector<double> prob(static_cast<std::size_t>(c));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* z = holdout.values.row(i);
    for (int j = 0; j < c; ++j) adj[static_cast<std::size_t>(j)] = z[j] - theta[static_cast<std::size_t>(j)];
    softmax_row(adj.data(), c, prob.data());
    double p = std::max(prob[static_cast<std::size_t>(holdout.labels[static_cast<std::size_t>(i)])], 1e-12);
    total -= std::log(p);
  }
  return total / static_cast<double>(n);
}

// Gradient of the objective above w.r.t. theta: g_c = mean_i(1[y_i=c] - p_ic).
inline void offset_gradient_theta(const LabeledBatch& holdout,
                                  const std::vector<double>& theta,
                                  std::vector<double>* grad) {
  const int n = holdout.values.rows();
  const int c = holdout.values.cols();
  std::fill(grad->begin(), grad->end(), 0.0);
  std::vector<double> adj(static_cast<std::size_t>(c));
  std::vector<double> prob(static_cast<std::size_t>(c));
  for (int i = 0; i < n; ++i) {
    const double* z = holdout.values.row(i);
    for (int j = 0; j < c; ++j) adj[static_cast<std::size_t>(j)] = z[j] - theta[static_cast<std::size_t>(j)];
    softmax_row(adj.data(), c, prob.data());
    for (int j = 0; j < c; ++j) (*grad)[static_cast<std::size_t>(j)] -= prob[static_cast<std::size_t>(j)];
    (*grad)[static_cast<std::size_t>(holdout.labels[static_cast<std::size_t>(i)])] += 1.0;
  }
  for (int j = 0; j < c; ++j) (*grad)[static_cast<std::size_t>(j)] /= static_cast<double>(n);
}

}  // namespace detail

// Mean cross-entropy of softmax(z - log pi) against the holdout labels.
inline double offset_objective(const LabeledBatch& holdout, const OffsetVector& pi) {
  check_offsets(pi, "offset_objective");
  if (holdout.values.cols() != pi.size())
    throw std::invalid_argument("offset_objective: class-count mismatch");
  check_batch(holdout, holdout.values.cols(), "offset_objective");
  std::vector<double> theta(pi.pi.size());
  for (std::size_t j = 0; j < pi.pi.size(); ++j) theta[j] = std::log(pi.pi[j]);
  return detail::offset_objective_theta(holdout, theta);
}

// Fit offsets by minimizing the holdout cross-entropy of softmax(z - log pi).
//
// Projected gradient descent in theta = log pi with a backtracking line
// search inside the box [bound_lo, bound_hi]. The start is theta = 0 (all-ones
// offsets), so the returned objective never exceeds the unrefined one.
// Classes absent from the holdout carry no usable signal; their coordinates
// are frozen during the descent and set to the mean of the fitted coordinates
// before gauge fixing, which leaves them at exactly 1 afterwards.
inline OffsetFitResult fit_offsets(const LabeledBatch& holdout,
                                   const OffsetFitConfig& cfg = {}) {
  const int n = holdout.values.rows();
  const int c = holdout.values.cols();
  if (n == 0) throw std::invalid_argument("fit_offsets: empty holdout");
  if (c < 2) throw std::invalid_argument("fit_offsets: need at least 2 classes");
  if (!holdout.values.all_finite())
    throw std::invalid_argument("fit_offsets: non-finite logits");
  check_batch(holdout, c, "fit_offsets");
  if (cfg.max_iters < 0) throw std::invalid_argument("fit_offsets: negative max_iters");
  if (!(cfg.step_size > 0.0)) throw std::invalid_argument("fit_offsets: step_size must be positive");
  if (!(cfg.tolerance > 0.0)) throw std::invalid_argument("fit_offsets: tolerance must be positive");
  if (!(cfg.bound_lo < cfg.bound_hi))
    throw std::invalid_argument("fit_offsets: bound_lo must be below bound_hi");

  std::vector<bool> present(static_cast<std::size_t>(c), false);
  for (int y : holdout.labels) present[static_cast<std::size_t>(y)] = true;

  std::vector<double> theta(static_cast<std::size_t>(c), 0.0);
  std::vector<double> grad(static_cast<std::size_t>(c), 0.0);
  std::vector<double> trial(static_cast<std::size_t>(c), 0.0);
  double fval = detail::offset_objective_theta(holdout, theta);
  double step = cfg.step_size;
  bool converged = false;
  int iter = 0;

  auto clamp = [&](double v) {
    return std::min(cfg.bound_hi, std::max(cfg.bound_lo, v));
  };

  for (; iter < cfg.max_iters; ++iter) {
    detail::offset_gradient_theta(holdout, theta, &grad);
    for (int j = 0; j < c; ++j)
      if (!present[static_cast<std::size_t>(j)]) grad[static_cast<std::size_t>(j)] = 0.0;

    // Backtracking: halve the step until the objective decreases.
    bool accepted = false;
    double ftrial = fval;
    for (int bt = 0; bt < 60; ++bt) {
      for (int j = 0; j < c; ++j)
        trial[static_cast<std::size_t>(j)] = clamp(theta[static_cast<std::size_t>(j)] - step * grad[static_cast<std::size_t>(j)]);
      ftrial = detail::offset_objective_theta(holdout, trial);
      if (ftrial < fval) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {  // no descent direction left at float resolution
      converged = true;
      break;
    }
    double decrease = fval - ftrial;
    theta = trial;
    fval = ftrial;
    step *= 1.5;  // recover step length after successful moves
    if (decrease < cfg.tolerance) {
      ++iter;
      converged = true;
      break;
    }
  }

  // Gauge-fix in log space by centering the fitted coordinates on their own
  // mean; absent classes sit at that mean, i.e. exactly 0 after centering, so
  // they exponentiate to exactly 1 with no rounding residue.
  double fitted_sum = 0.0;
  int fitted_count = 0;
  for (int j = 0; j < c; ++j)
    if (present[static_cast<std::size_t>(j)]) {
      fitted_sum += theta[static_cast<std::size_t>(j)];
      ++fitted_count;
    }
  const double fitted_mean = fitted_sum / static_cast<double>(fitted_count);
  for (int j = 0; j < c; ++j) {
    auto sj = static_cast<std::size_t>(j);
    theta[sj] = present[sj] ? theta[sj] - fitted_mean : 0.0;
  }

  OffsetFitResult result;
  result.pi.pi.resize(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) result.pi.pi[static_cast<std::size_t>(j)] = std::exp(theta[static_cast<std::size_t>(j)]);
  result.objective = fval;
  result.iterations = iter;
  result.converged = converged;
  return result;
}

// Frequency-based offsets: pi_c = (count_c / total)^lambda, gauge-fixed.
// lambda = 0 yields all-ones; lambda = 1 the plain class frequencies.
inline OffsetVector la_offsets(const std::vector<long long>& class_counts,
                               double lambda) {
  if (class_counts.empty()) throw std::invalid_argument("la_offsets: empty counts");
  long long total = 0;
  for (long long n : class_counts) {
    if (n <= 0) throw std::invalid_argument("la_offsets: counts must be positive");
    total += n;
  }
  if (!std::isfinite(lambda)) throw std::invalid_argument("la_offsets: non-finite lambda");
  OffsetVector out;
  out.pi.resize(class_counts.size());
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    double freq = static_cast<double>(class_counts[c]) / static_cast<double>(total);
    out.pi[c] = std::pow(freq, lambda);
  }
  return gauge_fix(out);
}

}  // namespace seval
