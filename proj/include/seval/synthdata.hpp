#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "seval/matrix.hpp"
#include "seval/metrics.hpp"
#include "seval/rng.hpp"

namespace seval {

enum class GeneratorKind { kGaussianMixture, kTwoMoons };

// Long-tailed synthetic classification data. Class c (1-based position in the
// head-to-tail order) gets round(n1 * gamma^{-(c-1)/(C-1)}) labeled samples;
// the unlabeled pool follows the same law with (m1, gamma_u). gamma_u < 1
// reverses the unlabeled tail: counts are computed with 1/gamma_u and the
// class order flipped, so the unlabeled head sits on the labeled tail.
struct SynthSpec {
  int n_classes = 2;
  long long n1 = 100;  // labeled head-class count
  long long m1 = 500;  // unlabeled head-class count
  double gamma_l = 1.0;
  double gamma_u = 1.0;
  GeneratorKind generator = GeneratorKind::kGaussianMixture;
  int dim = 2;
  double mean_separation = 3.0;  // gaussian mixture: radius of the class-mean circle
  double cov_scale = 1.0;        // gaussian mixture: isotropic noise scale
  double moons_noise_sd = 0.15;  // two moons: additive noise
  long long test_per_class = 250;
  std::uint64_t seed = 1;
};

struct SynthDataset {
  LabeledBatch labeled;    // values = features
  Matrix unlabeled;        // features only
  OracleUnlabeled oracle;  // hidden labels of the unlabeled pool
  LabeledBatch test;       // balanced, disjoint draw
};

// Long-tail counts: n_c = round(n1 * gamma^{-(c-1)/(C-1)}), clamped to >= 1.
inline std::vector<long long> class_counts(long long n1, double gamma, int n_classes) {
  if (n1 < 1) throw std::invalid_argument("class_counts: n1 must be >= 1");
  if (!(gamma >= 1.0)) throw std::invalid_argument("class_counts: gamma must be >= 1");
  if (n_classes < 2) throw std::invalid_argument("class_counts: need at least 2 classes");
  std::vector<long long> out(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    double expo = -static_cast<double>(c) / static_cast<double>(n_classes - 1);
    double v = static_cast<double>(n1) * std::pow(gamma, expo);
    out[static_cast<std::size_t>(c)] = std::max(1LL, static_cast<long long>(std::llround(v)));
  }
  return out;
}

namespace detail {

inline std::vector<long long> unlabeled_counts(long long m1, double gamma, int n_classes) {
  if (gamma >= 1.0) return class_counts(m1, gamma, n_classes);
  if (!(gamma > 0.0)) throw std::invalid_argument("generate: gamma_u must be positive");
  std::vector<long long> counts = class_counts(m1, 1.0 / gamma, n_classes);
  std::reverse(counts.begin(), counts.end());
  return counts;
}

// Draw one sample of class c into `row`.
struct ClassSampler {
  const SynthSpec& spec;

  void operator()(int c, Rng& rng, double* row) const {
    if (spec.generator == GeneratorKind::kGaussianMixture) {
      double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                     static_cast<double>(spec.n_classes);
      row[0] = spec.mean_separation * std::cos(angle) + spec.cov_scale * rng.normal();
      row[1] = spec.mean_separation * std::sin(angle) + spec.cov_scale * rng.normal();
      for (int j = 2; j < spec.dim; ++j) row[j] = spec.cov_scale * rng.normal();
    } else {  // two moons
      double t = rng.uniform(0.0, std::numbers::pi);
      double x, y;
      if (c == 0) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
      row[0] = x + spec.moons_noise_sd * rng.normal();
      row[1] = y + spec.moons_noise_sd * rng.normal();
    }
  }
};

}  // namespace detail

inline void check_spec(const SynthSpec& spec) {
  if (spec.n_classes < 2) throw std::invalid_argument("generate: need at least 2 classes");
  if (spec.generator == GeneratorKind::kTwoMoons && spec.n_classes != 2)
    throw std::invalid_argument("generate: two moons is a 2-class generator");
  if (spec.generator == GeneratorKind::kTwoMoons && spec.dim != 2)
    throw std::invalid_argument("generate: two moons is 2-dimensional");
  if (spec.dim < 2) throw std::invalid_argument("generate: dim must be >= 2");
  if (!(spec.gamma_l >= 1.0)) throw std::invalid_argument("generate: gamma_l must be >= 1");
  if (spec.n1 < 1 || spec.m1 < 1 || spec.test_per_class < 1)
    throw std::invalid_argument("generate: counts must be >= 1");
  if (!(spec.mean_separation > 0.0) || !(spec.cov_scale > 0.0) || !(spec.moons_noise_sd > 0.0))
    throw std::invalid_argument("generate: scales must be positive");
}

// Same spec (same seed) -> bitwise-identical dataset. The test split is a
// fresh balanced draw from the same class conditionals, so it is disjoint
// from the train pools.
inline SynthDataset generate(const SynthSpec& spec) {
  check_spec(spec);
  const std::vector<long long> n_lab = class_counts(spec.n1, spec.gamma_l, spec.n_classes);
  const std::vector<long long> n_unl = detail::unlabeled_counts(spec.m1, spec.gamma_u, spec.n_classes);

  Rng rng(derive_seed(spec.seed, seed_tag::kDataset));
  detail::ClassSampler draw{spec};

  auto fill = [&](const std::vector<long long>& counts, Matrix* values,
                  std::vector<int>* labels) {
    long long total = 0;
    for (long long v : counts) total += v;
    *values = Matrix(static_cast<int>(total), spec.dim);
    labels->clear();
    labels->reserve(static_cast<std::size_t>(total));
    int r = 0;
    for (int c = 0; c < spec.n_classes; ++c)
      for (long long k = 0; k < counts[static_cast<std::size_t>(c)]; ++k, ++r) {
        draw(c, rng, values->row(r));
        labels->push_back(c);
      }
  };

  SynthDataset out;
  fill(n_lab, &out.labeled.values, &out.labeled.labels);

  std::vector<int> unl_labels;
  fill(n_unl, &out.unlabeled, &unl_labels);
  out.oracle.true_labels = std::move(unl_labels);
  out.oracle.class_counts = n_unl;

  std::vector<long long> n_test(static_cast<std::size_t>(spec.n_classes), spec.test_per_class);
  fill(n_test, &out.test.values, &out.test.labels);
  return out;
}

}  // namespace seval
