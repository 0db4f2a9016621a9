#pragma once

#include <cstdint>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "seval/simulator.hpp"
#include "seval/synthdata.hpp"

namespace seval {

// One fully resolved run configuration: dataset recipe plus training recipe.
struct RunConfig {
  SynthSpec spec;
  TrainConfig train;
  bool dataset_seed_pinned = false;  // dataset.seed given explicitly in the file
  std::string output_root = "runs";
};

namespace detail {

class ConfigReader {
 public:
  // Holds its own copy: block() hands out temporaries, so a reference member
  // would dangle as soon as a nested reader is built from one.
  ConfigReader(nlohmann::json j, std::string scope)
      : j_(std::move(j)), scope_(std::move(scope)) {
    if (!j_.is_object())
      throw std::invalid_argument("config: '" + scope_ + "' must be an object");
  }

  ~ConfigReader() = default;

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw std::invalid_argument("config: unknown field '" + scope_ + it.key() + "'");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key))
      throw std::invalid_argument("config: missing field '" + scope_ + key + "'");
    return get<T>(key);
  }

  template <typename T>
  T optional(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return get<T>(key);
  }

  nlohmann::json block(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) return nlohmann::json::object();
    return j_.at(key);
  }

 private:
  template <typename T>
  T get(const std::string& key) {
    seen_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config: field '" + scope_ + key + "' has the wrong type");
    }
  }

  nlohmann::json j_;
  std::string scope_;
  std::set<std::string> seen_;
};

}  // namespace detail

// Parse and validate a run config. Missing required fields and unknown or
// ill-typed fields raise std::invalid_argument naming the offending field.
// Every omitted optional field takes its documented default; dataset.seed
// defaults to train.seed so sweeping seeds redraws the data too.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  detail::ConfigReader top(j, "");
  RunConfig cfg;

  {
    detail::ConfigReader ds(top.block("dataset"), "dataset.");
    std::string gen = ds.require<std::string>("generator");
    if (gen == "gaussian_mixture") cfg.spec.generator = GeneratorKind::kGaussianMixture;
    else if (gen == "two_moons") cfg.spec.generator = GeneratorKind::kTwoMoons;
    else throw std::invalid_argument("config: dataset.generator must be gaussian_mixture or two_moons");
    cfg.spec.n_classes = ds.require<int>("classes");
    cfg.spec.n1 = ds.require<long long>("n1");
    cfg.spec.m1 = ds.require<long long>("m1");
    cfg.spec.gamma_l = ds.optional<double>("gamma_l", 1.0);
    cfg.spec.gamma_u = ds.optional<double>("gamma_u", 1.0);
    cfg.spec.dim = ds.optional<int>("dim", 2);
    cfg.spec.mean_separation = ds.optional<double>("mean_separation", 3.0);
    cfg.spec.cov_scale = ds.optional<double>("cov_scale", 1.0);
    cfg.spec.moons_noise_sd = ds.optional<double>("moons_noise_sd", 0.15);
    cfg.spec.test_per_class = ds.optional<long long>("test_per_class", 250);
    cfg.dataset_seed_pinned = ds.has("seed");
    cfg.spec.seed = ds.optional<std::uint64_t>("seed", 0);
    ds.finish();
  }

  {
    detail::ConfigReader tr(top.block("train"), "train.");
    cfg.train.method = method_from_name(tr.require<std::string>("method"));
    cfg.train.seed = tr.require<std::uint64_t>("seed");
    cfg.train.total_iters = tr.optional<long long>("total_iters", 20000);
    cfg.train.labeled_batch = tr.optional<int>("labeled_batch", 64);
    cfg.train.unlabeled_batch = tr.optional<int>("unlabeled_batch", 128);
    cfg.train.learning_rate = tr.optional<double>("learning_rate", 0.03);
    cfg.train.model_ema_decay = tr.optional<double>("model_ema_decay", 0.999);
    cfg.train.unlabeled_weight = tr.optional<double>("unlabeled_weight", 1.0);
    cfg.train.fixed_tau = tr.optional<double>("fixed_tau", 0.95);
    cfg.train.la_lambda = tr.optional<double>("la_lambda", 1.0);
    cfg.train.flex_tau_base = tr.optional<double>("flex_tau_base", 0.95);
    cfg.train.flex_update_every = tr.optional<long long>("flex_update_every", 100);
    cfg.train.da_uniform_target = tr.optional<bool>("da_uniform_target", false);
    cfg.train.da_marginal_decay = tr.optional<double>("da_marginal_decay", 0.999);
    std::string model = tr.optional<std::string>("model", "linear_softmax");
    if (model == "linear_softmax") cfg.train.model_kind = ModelKind::kLinearSoftmax;
    else if (model == "mlp") cfg.train.model_kind = ModelKind::kMlp;
    else throw std::invalid_argument("config: train.model must be linear_softmax or mlp");
    cfg.train.hidden_width = tr.optional<int>("hidden_width", 32);
    cfg.train.weak_noise_sd = tr.optional<double>("weak_noise_sd", 0.05);
    cfg.train.strong_noise_sd = tr.optional<double>("strong_noise_sd", 0.25);
    cfg.train.strong_dropout = tr.optional<double>("strong_dropout", 0.2);
    cfg.train.eval_every = tr.optional<long long>("eval_every", 400);
    cfg.train.stratified_partition = tr.optional<bool>("stratified_partition", true);
    tr.finish();
  }

  {
    detail::ConfigReader cu(top.block("curriculum"), "curriculum.");
    cfg.train.curriculum.length_L = cu.optional<int>("length", 50);
    cfg.train.curriculum.eta_pi = cu.optional<double>("eta_pi", 0.9);
    cfg.train.curriculum.eta_tau = cu.optional<double>("eta_tau", 0.9);
    cu.finish();
  }

  {
    detail::ConfigReader th(top.block("thresholds"), "thresholds.");
    cfg.train.thresholds.target_t = th.optional<double>("target", 0.75);
    cfg.train.thresholds.group_size = th.optional<int>("group_size", 1);
    cfg.train.thresholds.min_predicted_e1 = th.optional<int>("e1", 10);
    cfg.train.thresholds.min_true_e2 = th.optional<int>("e2", 10);
    cfg.train.thresholds.pi_floor_rule = th.optional<bool>("pi_floor_rule", true);
    cfg.train.thresholds_on_refined = th.optional<bool>("on_refined", true);
    std::string weights = th.optional<std::string>("weights", "inverse-frequency");
    if (weights == "uniform") cfg.train.threshold_uniform_weights = true;
    else if (weights == "inverse-frequency") cfg.train.threshold_uniform_weights = false;
    else throw std::invalid_argument("config: thresholds.weights must be uniform or inverse-frequency");
    th.finish();
  }

  {
    detail::ConfigReader of(top.block("offsets"), "offsets.");
    cfg.train.offsets.max_iters = of.optional<int>("max_iters", 10000);
    cfg.train.offsets.step_size = of.optional<double>("step_size", 1.0);
    cfg.train.offsets.tolerance = of.optional<double>("tolerance", 1e-8);
    cfg.train.offsets.bound_lo = of.optional<double>("bound_lo", -10.0);
    cfg.train.offsets.bound_hi = of.optional<double>("bound_hi", 10.0);
    of.finish();
  }

  cfg.output_root = top.optional<std::string>("output_root", "runs");
  top.finish();

  if (!cfg.dataset_seed_pinned) cfg.spec.seed = cfg.train.seed;
  cfg.train.curriculum.total_iters_T = cfg.train.total_iters;
  return cfg;
}

// Canonical resolved form: every field explicit, keys sorted by the JSON
// object. Hashing this makes run directories stable across config spellings.
inline nlohmann::json resolved_config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["dataset"]["generator"] =
      cfg.spec.generator == GeneratorKind::kGaussianMixture ? "gaussian_mixture" : "two_moons";
  j["dataset"]["classes"] = cfg.spec.n_classes;
  j["dataset"]["n1"] = cfg.spec.n1;
  j["dataset"]["m1"] = cfg.spec.m1;
  j["dataset"]["gamma_l"] = cfg.spec.gamma_l;
  j["dataset"]["gamma_u"] = cfg.spec.gamma_u;
  j["dataset"]["dim"] = cfg.spec.dim;
  j["dataset"]["mean_separation"] = cfg.spec.mean_separation;
  j["dataset"]["cov_scale"] = cfg.spec.cov_scale;
  j["dataset"]["moons_noise_sd"] = cfg.spec.moons_noise_sd;
  j["dataset"]["test_per_class"] = cfg.spec.test_per_class;
  j["dataset"]["seed"] = cfg.spec.seed;
  j["train"]["method"] = method_name(cfg.train.method);
  j["train"]["seed"] = cfg.train.seed;
  j["train"]["total_iters"] = cfg.train.total_iters;
  j["train"]["labeled_batch"] = cfg.train.labeled_batch;
  j["train"]["unlabeled_batch"] = cfg.train.unlabeled_batch;
  j["train"]["learning_rate"] = cfg.train.learning_rate;
  j["train"]["model_ema_decay"] = cfg.train.model_ema_decay;
  j["train"]["unlabeled_weight"] = cfg.train.unlabeled_weight;
  j["train"]["fixed_tau"] = cfg.train.fixed_tau;
  j["train"]["la_lambda"] = cfg.train.la_lambda;
  j["train"]["flex_tau_base"] = cfg.train.flex_tau_base;
  j["train"]["flex_update_every"] = cfg.train.flex_update_every;
  j["train"]["da_uniform_target"] = cfg.train.da_uniform_target;
  j["train"]["da_marginal_decay"] = cfg.train.da_marginal_decay;
  j["train"]["model"] = cfg.train.model_kind == ModelKind::kLinearSoftmax ? "linear_softmax" : "mlp";
  j["train"]["hidden_width"] = cfg.train.hidden_width;
  j["train"]["weak_noise_sd"] = cfg.train.weak_noise_sd;
  j["train"]["strong_noise_sd"] = cfg.train.strong_noise_sd;
  j["train"]["strong_dropout"] = cfg.train.strong_dropout;
  j["train"]["eval_every"] = cfg.train.eval_every;
  j["train"]["stratified_partition"] = cfg.train.stratified_partition;
  j["curriculum"]["length"] = cfg.train.curriculum.length_L;
  j["curriculum"]["eta_pi"] = cfg.train.curriculum.eta_pi;
  j["curriculum"]["eta_tau"] = cfg.train.curriculum.eta_tau;
  j["thresholds"]["target"] = cfg.train.thresholds.target_t;
  j["thresholds"]["group_size"] = cfg.train.thresholds.group_size;
  j["thresholds"]["e1"] = cfg.train.thresholds.min_predicted_e1;
  j["thresholds"]["e2"] = cfg.train.thresholds.min_true_e2;
  j["thresholds"]["pi_floor_rule"] = cfg.train.thresholds.pi_floor_rule;
  j["thresholds"]["on_refined"] = cfg.train.thresholds_on_refined;
  j["thresholds"]["weights"] = cfg.train.threshold_uniform_weights ? "uniform" : "inverse-frequency";
  j["offsets"]["max_iters"] = cfg.train.offsets.max_iters;
  j["offsets"]["step_size"] = cfg.train.offsets.step_size;
  j["offsets"]["tolerance"] = cfg.train.offsets.tolerance;
  j["offsets"]["bound_lo"] = cfg.train.offsets.bound_lo;
  j["offsets"]["bound_hi"] = cfg.train.offsets.bound_hi;
  j["output_root"] = cfg.output_root;
  return j;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

// 16-hex-digit digest of the resolved config (dataset + method recipe),
// excluding the output root so moving the output tree keeps directory names.
inline std::string config_hash(const RunConfig& cfg) {
  nlohmann::json j = resolved_config_json(cfg);
  j.erase("output_root");
  std::string dump = j.dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(dump)));
  return buf;
}

}  // namespace seval
