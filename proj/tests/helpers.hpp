#pragma once

// Shared utilities for the test binaries: unique temp directories, a driver
// for the command-line binary, and random instance builders.

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "seval/matrix.hpp"
#include "seval/rng.hpp"
#include "seval/thresholds.hpp"

namespace testutil {

inline std::filesystem::path fresh_dir(const std::string& stem) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("seval_" + stem + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code = -1;
  std::string output;  // stdout + stderr interleaved
};

#ifdef SEVAL_CLI_PATH
// Run the CLI binary with a shell-quoted argument string; optional working
// directory and environment prefix (e.g. "VAR='x'"). Output is captured to a
// file and returned.
inline CliResult run_cli(const std::string& args, const std::string& chdir = "",
                         const std::string& env_prefix = "") {
  auto out_path = fresh_dir("cliout") / "out.txt";
  std::string cmd;
  if (!chdir.empty()) cmd += "cd '" + chdir + "' && ";
  if (!env_prefix.empty()) cmd += env_prefix + " ";
  cmd += "'" + std::string(SEVAL_CLI_PATH) + "' " + args + " > '" + out_path.string() +
         "' 2>&1";
  int rc = std::system(cmd.c_str());
  CliResult r;
  r.code = (rc != -1 && WIFEXITED(rc)) ? WEXITSTATUS(rc) : -1;
  r.output = slurp(out_path);
  return r;
}
#endif

// ---- random instances -------------------------------------------------------

inline seval::Matrix random_logits(seval::Rng& rng, int n, int c, double scale = 2.0) {
  seval::Matrix z(n, c);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) z(i, j) = scale * rng.normal();
  return z;
}

inline std::vector<int> random_labels(seval::Rng& rng, int n, int c) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
  return y;
}

inline seval::LabeledBatch random_holdout(seval::Rng& rng, int n, int c, double scale = 2.0) {
  seval::LabeledBatch b;
  b.values = random_logits(rng, n, c, scale);
  b.labels = random_labels(rng, n, c);
  return b;
}

// Labels drawn from the softmax of base logits z0, observed logits shifted by
// log pi_star. The holdout cross-entropy is then minimized near pi_star.
inline seval::LabeledBatch shifted_calibrated_holdout(seval::Rng& rng, int n,
                                                      const std::vector<double>& pi_star,
                                                      double scale = 2.0) {
  const int c = static_cast<int>(pi_star.size());
  seval::LabeledBatch b;
  b.values = seval::Matrix(n, c);
  b.labels.resize(static_cast<std::size_t>(n));
  std::vector<double> z0(static_cast<std::size_t>(c));
  std::vector<double> p(static_cast<std::size_t>(c));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) z0[static_cast<std::size_t>(j)] = scale * rng.normal();
    seval::softmax_row(z0.data(), c, p.data());
    double u = rng.uniform01();
    int y = c - 1;
    double acc = 0.0;
    for (int j = 0; j < c; ++j) {
      acc += p[static_cast<std::size_t>(j)];
      if (u < acc) {
        y = j;
        break;
      }
    }
    b.labels[static_cast<std::size_t>(i)] = y;
    for (int j = 0; j < c; ++j)
      b.values(i, j) = z0[static_cast<std::size_t>(j)] +
                       std::log(pi_star[static_cast<std::size_t>(j)]);
  }
  return b;
}

// Probability rows built from small random integers, so every value is a
// ratio of integers and row sums land within double rounding of 1.
inline seval::Matrix integer_prob_rows(seval::Rng& rng, int n, int c, int max_part = 20) {
  seval::Matrix q(n, c);
  for (int i = 0; i < n; ++i) {
    long long total = 0;
    std::vector<long long> parts(static_cast<std::size_t>(c));
    for (int j = 0; j < c; ++j) {
      parts[static_cast<std::size_t>(j)] =
          1 + static_cast<long long>(rng.below(static_cast<std::uint64_t>(max_part)));
      total += parts[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < c; ++j)
      q(i, j) = static_cast<double>(parts[static_cast<std::size_t>(j)]) /
                static_cast<double>(total);
  }
  return q;
}

// Class weights whose entries are powers of two, so weighted sums accumulate
// without rounding and order of addition cannot matter.
inline seval::ClassWeights dyadic_weights(seval::Rng& rng, int c) {
  seval::ClassWeights w;
  w.omega.resize(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j)
    w.omega[static_cast<std::size_t>(j)] =
        1.0 / static_cast<double>(1LL << rng.below(5));
  return w;
}

}  // namespace testutil
