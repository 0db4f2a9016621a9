#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "seval/matrix.hpp"
#include "seval/offsets.hpp"
#include "seval/thresholds.hpp"

namespace seval {

// One refined pseudo-label batch.
//   q            refined probabilities (source-model pathway)
//   hard_labels  argmax of q — the labels used as training targets
//   pred_labels  argmax of the training-model pathway, indexes the thresholds
//   mask         selection flags: max_j q_ij >= tau[pred_labels_i]
struct PseudoBatch {
  Matrix q;
  std::vector<int> hard_labels;
  std::vector<int> pred_labels;
  std::vector<std::uint8_t> mask;

  int size() const { return q.rows(); }
};

// Refined probabilities and hard labels: q = softmax(z - log pi),
// hard label = argmax_j q_ij (ties to the lowest index).
inline std::pair<Matrix, std::vector<int>> pseudo_label(const Matrix& logits,
                                                        const OffsetVector& pi) {
  Matrix q = softmax_rows(apply_offsets(logits, pi));
  std::vector<int> hard = row_argmax(q);
  return {std::move(q), std::move(hard)};
}

// Selection mask: sample i passes when its refined confidence max_j q_ij
// reaches the threshold of its training-pathway predicted class. The
// comparison is >= (a sample sitting exactly at the threshold is kept).
inline std::vector<std::uint8_t> select_mask(const Matrix& q,
                                             const std::vector<int>& pred_labels,
                                             const ThresholdVector& tau) {
  check_thresholds(tau, "select_mask");
  if (q.cols() != tau.size())
    throw std::invalid_argument("select_mask: class-count mismatch");
  if (q.rows() != static_cast<int>(pred_labels.size()))
    throw std::invalid_argument("select_mask: rows/pred_labels mismatch");
  std::vector<std::uint8_t> mask(pred_labels.size(), 0);
  for (int i = 0; i < q.rows(); ++i) {
    int p = pred_labels[static_cast<std::size_t>(i)];
    if (p < 0 || p >= q.cols())
      throw std::invalid_argument("select_mask: predicted label out of range");
    const double* row = q.row(i);
    double maxq = row[argmax_row(row, q.cols())];
    if (maxq >= tau.tau[static_cast<std::size_t>(p)]) mask[static_cast<std::size_t>(i)] = 1;
  }
  return mask;
}

// Masked cross-entropy risk over an unlabeled batch. The denominator is the
// full batch size M: excluded samples contribute zero but still dilute, so
// selecting fewer samples lowers the risk rather than renormalizing it.
inline double unlabeled_risk(const std::vector<int>& pseudo_labels,
                             const std::vector<std::uint8_t>& mask,
                             const Matrix& train_probs) {
  const int m = train_probs.rows();
  if (m == 0) return 0.0;
  if (static_cast<int>(pseudo_labels.size()) != m ||
      static_cast<int>(mask.size()) != m)
    throw std::invalid_argument("unlabeled_risk: length mismatch");
  check_prob_rows(train_probs, "unlabeled_risk");
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    int y = pseudo_labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= train_probs.cols())
      throw std::invalid_argument("unlabeled_risk: pseudo label out of range");
    double p = std::max(train_probs(i, y), 1e-12);
    total -= std::log(p);
  }
  return total / static_cast<double>(m);
}

// Convenience: run the full pipeline for one batch. `pseudo_logits` come from
// the label-source model (e.g. the averaged model on weakly perturbed inputs),
// `train_probs` from the live model on strongly perturbed inputs.
inline PseudoBatch make_pseudo_batch(const Matrix& pseudo_logits,
                                     const Matrix& train_probs,
                                     const OffsetVector& pi,
                                     const ThresholdVector& tau) {
  if (train_probs.rows() != pseudo_logits.rows() ||
      train_probs.cols() != pseudo_logits.cols())
    throw std::invalid_argument("make_pseudo_batch: shape mismatch");
  PseudoBatch batch;
  auto [q, hard] = pseudo_label(pseudo_logits, pi);
  batch.q = std::move(q);
  batch.hard_labels = std::move(hard);
  batch.pred_labels = row_argmax(train_probs);
  batch.mask = select_mask(batch.q, batch.pred_labels, tau);
  return batch;
}

}  // namespace seval
