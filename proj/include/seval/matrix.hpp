#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace seval {

// Dense row-major matrix of doubles. Rows are samples; columns are classes
// (logits, probabilities) or features (dataset storage).
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative shape");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(int r, int c) { return data_[idx(r, c)]; }
  double operator()(int r, int c) const { return data_[idx(r, c)]; }

  double* row(int r) { return data_.data() + idx(r, 0); }
  const double* row(int r) const { return data_.data() + idx(r, 0); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t idx(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Samples plus integer class labels in [0, C). `values` holds logits,
// probabilities or features depending on context.
struct LabeledBatch {
  Matrix values;
  std::vector<int> labels;

  int size() const { return values.rows(); }
};

inline void check_batch(const LabeledBatch& batch, int n_classes,
                        const char* where) {
  if (batch.values.rows() != static_cast<int>(batch.labels.size()))
    throw std::invalid_argument(std::string(where) + ": rows/labels mismatch");
  for (int y : batch.labels)
    if (y < 0 || y >= n_classes)
      throw std::invalid_argument(std::string(where) + ": label out of range");
}

// Numerically shifted softmax of one row.
inline void softmax_row(const double* logits, int n, double* out) {
  double m = logits[0];
  for (int j = 1; j < n; ++j) m = std::max(m, logits[j]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    out[j] = std::exp(logits[j] - m);
    sum += out[j];
  }
  for (int j = 0; j < n; ++j) out[j] /= sum;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i)
    softmax_row(logits.row(i), logits.cols(), out.row(i));
  return out;
}

// Ties resolve to the lowest index.
inline int argmax_row(const double* v, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

inline std::vector<int> row_argmax(const Matrix& m) {
  std::vector<int> out(m.rows());
  for (int i = 0; i < m.rows(); ++i) out[i] = argmax_row(m.row(i), m.cols());
  return out;
}

inline std::vector<double> row_max(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (int i = 0; i < m.rows(); ++i)
    out[i] = *std::max_element(m.row(i), m.row(i) + m.cols());
  return out;
}

// Probability rows must sum to 1; tolerance covers accumulated float error.
inline void check_prob_rows(const Matrix& probs, const char* where) {
  for (int i = 0; i < probs.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < probs.cols(); ++j) {
      double p = probs(i, j);
      if (!(p >= 0.0) || !std::isfinite(p))
        throw std::invalid_argument(std::string(where) + ": negative or non-finite probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument(std::string(where) + ": probability row does not sum to 1");
  }
}

}  // namespace seval
