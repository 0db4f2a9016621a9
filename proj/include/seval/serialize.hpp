#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "seval/curriculum.hpp"
#include "seval/io.hpp"
#include "seval/offsets.hpp"
#include "seval/thresholds.hpp"

namespace seval {

// Offsets serialize as an array of positive decimals. Readers reject
// anything non-positive or non-finite.
inline nlohmann::json offsets_to_json(const OffsetVector& pi) {
  check_offsets(pi, "offsets_to_json");
  return nlohmann::json(pi.pi);
}

inline OffsetVector offsets_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument("offsets: expected a non-empty array");
  OffsetVector out;
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument("offsets: entries must be numbers");
    out.pi.push_back(v.get<double>());
  }
  check_offsets(out, "offsets");
  return out;
}

inline nlohmann::json thresholds_to_json(const ThresholdVector& tau) {
  check_thresholds(tau, "thresholds_to_json");
  return nlohmann::json(tau.tau);
}

inline ThresholdVector thresholds_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument("thresholds: expected a non-empty array");
  ThresholdVector out;
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument("thresholds: entries must be numbers");
    out.tau.push_back(v.get<double>());
  }
  check_thresholds(out, "thresholds");
  return out;
}

inline nlohmann::json threshold_report_to_json(const ThresholdFitReport& report) {
  nlohmann::json j;
  j["tau"] = thresholds_to_json(report.tau);
  j["fallback"] = report.fallback_classes;
  j["pi_floor"] = report.pi_floor_classes;
  return j;
}

inline ThresholdFitReport threshold_report_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("tau") || !j.contains("fallback") || !j.contains("pi_floor"))
    throw std::invalid_argument("threshold report: expected {tau, fallback, pi_floor}");
  ThresholdFitReport report;
  report.tau = thresholds_from_json(j.at("tau"));
  for (const auto& v : j.at("fallback")) report.fallback_classes.push_back(v.get<int>());
  for (const auto& v : j.at("pi_floor")) report.pi_floor_classes.push_back(v.get<int>());
  for (int c : report.fallback_classes)
    if (c < 0 || c >= report.tau.size())
      throw std::invalid_argument("threshold report: fallback class out of range");
  for (int c : report.pi_floor_classes)
    if (c < 0 || c >= report.tau.size())
      throw std::invalid_argument("threshold report: pi_floor class out of range");
  return report;
}

inline nlohmann::json curriculum_to_json(const Curriculum& curriculum) {
  nlohmann::json steps = nlohmann::json::array();
  for (const CurriculumStep& s : curriculum.steps) {
    nlohmann::json step;
    step["l"] = s.l;
    step["pi"] = offsets_to_json(s.pi);
    step["tau"] = thresholds_to_json(s.tau);
    steps.push_back(std::move(step));
  }
  nlohmann::json j;
  j["L"] = curriculum.length_L;
  j["steps"] = std::move(steps);
  j["pi_final_raw"] = offsets_to_json(curriculum.pi_final_raw);
  return j;
}

inline Curriculum curriculum_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("L") || !j.contains("steps") || !j.contains("pi_final_raw"))
    throw std::invalid_argument("curriculum: expected {L, steps, pi_final_raw}");
  Curriculum out;
  out.length_L = j.at("L").get<int>();
  if (out.length_L < 1) throw std::invalid_argument("curriculum: L must be >= 1");
  if (!j.at("steps").is_array() ||
      static_cast<int>(j.at("steps").size()) != out.length_L)
    throw std::invalid_argument("curriculum: expected exactly L steps");
  int expect_l = 1;
  int n_classes = -1;
  for (const auto& sj : j.at("steps")) {
    CurriculumStep step;
    step.l = sj.at("l").get<int>();
    if (step.l != expect_l)
      throw std::invalid_argument("curriculum: steps must be numbered 1..L in order");
    ++expect_l;
    step.pi = offsets_from_json(sj.at("pi"));
    step.tau = thresholds_from_json(sj.at("tau"));
    if (n_classes < 0) n_classes = step.pi.size();
    if (step.pi.size() != n_classes || step.tau.size() != n_classes)
      throw std::invalid_argument("curriculum: inconsistent class counts across steps");
    out.steps.push_back(std::move(step));
  }
  out.pi_final_raw = offsets_from_json(j.at("pi_final_raw"));
  if (out.pi_final_raw.size() != n_classes)
    throw std::invalid_argument("curriculum: pi_final_raw class count mismatch");
  return out;
}

inline void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace seval
