#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seval/matrix.hpp"
#include "seval/metrics.hpp"
#include "seval/simulator.hpp"

namespace seval {

// Write via a sibling temp file and rename, so readers never observe a
// half-written file and an interrupted run leaves the old content intact.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  out.push_back(field);
  return out;
}

// ---- prediction dumps ----------------------------------------------------
// CSV interchange for per-sample logits: sample_id, label (-1 when unknown),
// then one logit column per class.

struct PredictionDump {
  std::vector<long long> sample_ids;
  std::vector<int> labels;
  Matrix logits;

  int size() const { return logits.rows(); }
  int n_classes() const { return logits.cols(); }
};

inline std::string prediction_dump_csv(const PredictionDump& dump) {
  if (dump.logits.rows() != static_cast<int>(dump.sample_ids.size()) ||
      dump.logits.rows() != static_cast<int>(dump.labels.size()))
    throw std::invalid_argument("prediction_dump_csv: length mismatch");
  std::string s = "sample_id,label";
  for (int c = 0; c < dump.logits.cols(); ++c) s += ",logit_" + std::to_string(c);
  s += "\n";
  for (int i = 0; i < dump.logits.rows(); ++i) {
    s += std::to_string(dump.sample_ids[static_cast<std::size_t>(i)]);
    s += "," + std::to_string(dump.labels[static_cast<std::size_t>(i)]);
    for (int c = 0; c < dump.logits.cols(); ++c)
      s += "," + format_double(dump.logits(i, c));
    s += "\n";
  }
  return s;
}

namespace detail {

inline long long parse_ll(const std::string& s, int line_no, const char* what) {
  std::size_t pos = 0;
  long long v;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
  if (pos != s.size())
    throw std::invalid_argument("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  return v;
}

inline double parse_num(const std::string& s, int line_no, const char* what) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
  if (pos != s.size() || !std::isfinite(v))
    throw std::invalid_argument("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  return v;
}

}  // namespace detail

// Parse a prediction dump. Errors carry 1-based line numbers.
inline PredictionDump parse_prediction_dump(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("line 1: empty prediction dump");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label")
    throw std::invalid_argument("line 1: expected header sample_id,label,logit_0,...");
  const int n_classes = static_cast<int>(header.size()) - 2;
  for (int c = 0; c < n_classes; ++c)
    if (header[static_cast<std::size_t>(c) + 2] != "logit_" + std::to_string(c))
      throw std::invalid_argument("line 1: expected column logit_" + std::to_string(c));

  std::vector<long long> ids;
  std::vector<int> labels;
  std::vector<double> values;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (static_cast<int>(f.size()) != n_classes + 2)
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(n_classes + 2) + " fields, got " +
                                  std::to_string(f.size()));
    ids.push_back(detail::parse_ll(f[0], line_no, "sample_id"));
    long long label = detail::parse_ll(f[1], line_no, "label");
    if (label < -1 || label >= n_classes)
      throw std::invalid_argument("line " + std::to_string(line_no) + ": label out of range");
    labels.push_back(static_cast<int>(label));
    for (int c = 0; c < n_classes; ++c)
      values.push_back(detail::parse_num(f[static_cast<std::size_t>(c) + 2], line_no, "logit"));
  }
  if (ids.empty()) throw std::invalid_argument("line 1: prediction dump has no rows");

  PredictionDump dump;
  dump.sample_ids = std::move(ids);
  dump.labels = std::move(labels);
  dump.logits = Matrix(static_cast<int>(dump.sample_ids.size()), n_classes);
  for (int i = 0; i < dump.logits.rows(); ++i)
    for (int c = 0; c < n_classes; ++c)
      dump.logits(i, c) = values[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_classes) +
                                 static_cast<std::size_t>(c)];
  return dump;
}

inline PredictionDump read_prediction_dump(const std::filesystem::path& path) {
  try {
    return parse_prediction_dump(read_text(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

inline void write_prediction_dump(const std::filesystem::path& path, const PredictionDump& dump) {
  write_text_atomic(path, prediction_dump_csv(dump));
}

// ---- sample tables ---------------------------------------------------------
// Dataset rows: feature columns then one label column (-1 marks unlabeled).

inline std::string samples_csv(const Matrix& features, const std::vector<int>& labels) {
  if (features.rows() != static_cast<int>(labels.size()))
    throw std::invalid_argument("samples_csv: length mismatch");
  std::string s;
  for (int j = 0; j < features.cols(); ++j) s += "f" + std::to_string(j) + ",";
  s += "label\n";
  for (int i = 0; i < features.rows(); ++i) {
    for (int j = 0; j < features.cols(); ++j) s += format_double(features(i, j)) + ",";
    s += std::to_string(labels[static_cast<std::size_t>(i)]) + "\n";
  }
  return s;
}

inline std::pair<Matrix, std::vector<int>> parse_samples_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("line 1: empty sample table");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "label" || header[0] != "f0")
    throw std::invalid_argument("line 1: expected header f0,...,label");
  const int dim = static_cast<int>(header.size()) - 1;

  std::vector<double> values;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (static_cast<int>(f.size()) != dim + 1)
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(dim + 1) + " fields, got " +
                                  std::to_string(f.size()));
    for (int j = 0; j < dim; ++j)
      values.push_back(detail::parse_num(f[static_cast<std::size_t>(j)], line_no, "feature"));
    labels.push_back(static_cast<int>(detail::parse_ll(f[static_cast<std::size_t>(dim)], line_no, "label")));
  }
  Matrix features(static_cast<int>(labels.size()), dim);
  for (int i = 0; i < features.rows(); ++i)
    for (int j = 0; j < dim; ++j)
      features(i, j) = values[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim) +
                              static_cast<std::size_t>(j)];
  return {std::move(features), std::move(labels)};
}

// Write a generated dataset as four CSV files. The public unlabeled file
// carries -1 labels; the true labels go to the evaluation-only oracle file.
inline void export_dataset(const std::filesystem::path& dir, const SynthDataset& data) {
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "labeled.csv", samples_csv(data.labeled.values, data.labeled.labels));
  std::vector<int> hidden(static_cast<std::size_t>(data.unlabeled.rows()), -1);
  write_text_atomic(dir / "unlabeled.csv", samples_csv(data.unlabeled, hidden));
  write_text_atomic(dir / "oracle.csv", samples_csv(data.unlabeled, data.oracle.true_labels));
  write_text_atomic(dir / "test.csv", samples_csv(data.test.values, data.test.labels));
}

inline SynthDataset import_dataset(const std::filesystem::path& dir, int n_classes) {
  SynthDataset data;
  auto lab = parse_samples_csv(read_text(dir / "labeled.csv"));
  data.labeled.values = std::move(lab.first);
  data.labeled.labels = std::move(lab.second);
  auto oracle = parse_samples_csv(read_text(dir / "oracle.csv"));
  data.unlabeled = std::move(oracle.first);
  data.oracle = OracleUnlabeled::from_labels(oracle.second, n_classes);
  auto test = parse_samples_csv(read_text(dir / "test.csv"));
  data.test.values = std::move(test.first);
  data.test.labels = std::move(test.second);
  return data;
}

// ---- run outputs -----------------------------------------------------------

inline std::string run_metrics_csv(const RunRecord& rec) {
  std::string s = metrics_csv_header(rec.n_classes) + "\n";
  for (const MetricsRow& row : rec.metrics) s += metrics_csv_row(row, rec.n_classes) + "\n";
  return s;
}

inline std::string run_losses_csv(const RunRecord& rec) {
  std::string s = "iter,labeled_loss,unlabeled_loss\n";
  for (const LossRow& row : rec.losses) {
    s += std::to_string(row.iter);
    s += "," + format_double(row.labeled_loss);
    s += "," + format_double(row.unlabeled_loss);
    s += "\n";
  }
  return s;
}

}  // namespace seval
