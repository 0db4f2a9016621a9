// seval — command-line front end for the pseudo-label refinement library.
//
// Subcommands:
//   estimate  fit class offsets and per-class confidence thresholds from a
//             prediction dump of a labeled holdout set
//   train     run one semi-supervised training simulation from a JSON config
//   eval      score a pseudo-label dump against an oracle dump
//   sweep     train over a grid of imbalance ratios, methods, and seeds
//
// Exit codes: 0 success, 2 invalid input (bad flags, malformed files,
// out-of-range values), 3 runtime failure (I/O errors, diverged training).

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seval/config.hpp"
#include "seval/curriculum.hpp"
#include "seval/io.hpp"
#include "seval/metrics.hpp"
#include "seval/offsets.hpp"
#include "seval/pseudo_labels.hpp"
#include "seval/serialize.hpp"
#include "seval/simulator.hpp"
#include "seval/synthdata.hpp"
#include "seval/thresholds.hpp"

namespace {

using nlohmann::json;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// ---- estimate ---------------------------------------------------------------

struct EstimateArgs {
  std::string predictions_path;
  std::string weights = "inverse-frequency";
  double target_t = 0.75;
  int group_size = 1;
  int e1 = 10;
  int e2 = 10;
  bool no_pi_floor = false;
  bool threshold_on_raw = false;
  std::string out_path;
};

int cmd_estimate(const EstimateArgs& args) {
  seval::PredictionDump dump = seval::read_prediction_dump(args.predictions_path);
  const int n_classes = dump.n_classes();

  seval::LabeledBatch holdout;
  holdout.values = dump.logits;
  holdout.labels = dump.labels;
  for (int y : holdout.labels)
    if (y < 0)
      throw std::invalid_argument(
          "estimate: every row needs a true label (found label -1)");

  seval::ClassWeights weights =
      args.weights == "uniform"
          ? seval::ClassWeights::uniform(n_classes)
          : seval::ClassWeights::inverse_frequency(holdout.labels, n_classes);

  seval::ThresholdFitConfig tcfg;
  tcfg.target_t = args.target_t;
  tcfg.group_size = args.group_size;
  tcfg.min_predicted_e1 = args.e1;
  tcfg.min_true_e2 = args.e2;
  tcfg.pi_floor_rule = !args.no_pi_floor;
  seval::check_threshold_config(tcfg, n_classes, "estimate");

  auto [pi, report] = seval::estimate_step(holdout, weights, seval::OffsetFitConfig{},
                                           tcfg, !args.threshold_on_raw);

  json out;
  out["pi"] = seval::offsets_to_json(pi);
  out["tau"] = seval::thresholds_to_json(report.tau);
  out["fallback"] = report.fallback_classes;
  out["pi_floor"] = report.pi_floor_classes;

  std::cout << out.dump(2) << "\n";
  if (!args.out_path.empty()) seval::save_json(args.out_path, out);
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::optional<long long> iters;
  std::string out_root;
  std::string curriculum_path;
  bool dry_run = false;
};

std::string pick_output_root(const std::string& flag_root, const seval::RunConfig& cfg) {
  if (!flag_root.empty()) return flag_root;
  if (const char* env = std::getenv("SEVAL_OUTPUT_ROOT"); env && *env) return env;
  return cfg.output_root;
}

seval::RunConfig load_run_config(const TrainArgs& args) {
  seval::RunConfig cfg = seval::parse_run_config(seval::load_json(args.config_path));
  if (args.seed) {
    cfg.train.seed = *args.seed;
    if (!cfg.dataset_seed_pinned) cfg.spec.seed = *args.seed;
  }
  if (!args.method.empty()) cfg.train.method = seval::method_from_name(args.method);
  if (args.iters) {
    cfg.train.total_iters = *args.iters;
    cfg.train.curriculum.total_iters_T = *args.iters;
  }
  cfg.output_root = pick_output_root(args.out_root, cfg);
  if (!args.curriculum_path.empty()) {
    if (cfg.train.method != seval::Method::kSeval)
      throw std::invalid_argument("train: --curriculum only applies to method seval");
    seval::Curriculum preset =
        seval::curriculum_from_json(seval::load_json(args.curriculum_path));
    for (const seval::CurriculumStep& step : preset.steps)
      if (step.pi.size() != cfg.spec.n_classes)
        throw std::invalid_argument(
            "train: curriculum file class count does not match the dataset");
    cfg.train.curriculum.length_L = preset.length_L;  // replay adopts the file's length
    cfg.train.preset_curriculum = std::move(preset);
  }
  seval::check_spec(cfg.spec);
  seval::check_train_config(cfg.train);
  return cfg;
}

json summary_json(const seval::RunConfig& cfg, const seval::RunRecord& rec) {
  json s;
  s["method"] = seval::method_name(cfg.train.method);
  s["seed"] = cfg.train.seed;
  s["config_hash"] = seval::config_hash(cfg);
  s["test_accuracy"] = rec.test_accuracy;
  s["test_balanced_accuracy"] = rec.test_balanced_accuracy;
  s["adjusted_test_accuracy"] = rec.adjusted_test_accuracy;
  s["adjusted_test_balanced_accuracy"] = rec.adjusted_test_balanced_accuracy;
  s["pi_final_raw"] = seval::offsets_to_json(rec.pi_final_raw);
  if (!rec.metrics.empty()) {
    s["final_gain"] = rec.metrics.back().gain;
    s["final_cum_gain"] = rec.metrics.back().cum_gain;
  }
  return s;
}

int cmd_train(const TrainArgs& args) {
  seval::RunConfig cfg = load_run_config(args);

  std::filesystem::path outdir = std::filesystem::path(cfg.output_root) /
                                 (seval::config_hash(cfg) + "_seed" +
                                  std::to_string(cfg.train.seed));
  if (args.dry_run) {
    std::cout << seval::resolved_config_json(cfg).dump(2) << "\n";
    std::cout << "output_dir: " << outdir.string() << "\n";
    return 0;
  }

  seval::RunRecord rec = seval::train(cfg.spec, cfg.train);

  std::filesystem::create_directories(outdir);
  seval::save_json(outdir / "resolved_config.json", seval::resolved_config_json(cfg));
  seval::write_text_atomic(outdir / "metrics.csv", seval::run_metrics_csv(rec));
  seval::write_text_atomic(outdir / "losses.csv", seval::run_losses_csv(rec));
  if (cfg.train.method == seval::Method::kSeval)
    seval::save_json(outdir / "curriculum.json", seval::curriculum_to_json(rec.curriculum));
  seval::save_json(outdir / "summary.json", summary_json(cfg, rec));

  std::printf("%s seed=%llu test_acc=%.4f balanced_acc=%.4f adjusted_balanced_acc=%.4f\n",
              seval::method_name(cfg.train.method).c_str(),
              static_cast<unsigned long long>(cfg.train.seed), rec.test_accuracy,
              rec.test_balanced_accuracy, rec.adjusted_test_balanced_accuracy);
  std::cout << "output_dir: " << outdir.string() << "\n";
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string pseudo_path;
  std::string oracle_path;
  std::string tau_path;
};

// Reorder a dump's rows by ascending sample id so row order in the input file
// does not matter.
seval::PredictionDump sort_by_sample_id(const seval::PredictionDump& dump) {
  std::vector<int> order(dump.sample_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return dump.sample_ids[static_cast<std::size_t>(a)] <
           dump.sample_ids[static_cast<std::size_t>(b)];
  });
  seval::PredictionDump out;
  out.logits = seval::Matrix(dump.logits.rows(), dump.logits.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int src = order[i];
    out.sample_ids.push_back(dump.sample_ids[static_cast<std::size_t>(src)]);
    out.labels.push_back(dump.labels[static_cast<std::size_t>(src)]);
    for (int c = 0; c < dump.logits.cols(); ++c)
      out.logits(static_cast<int>(i), c) = dump.logits(src, c);
  }
  return out;
}

int cmd_eval(const EvalArgs& args) {
  seval::PredictionDump pseudo = sort_by_sample_id(seval::read_prediction_dump(args.pseudo_path));
  seval::PredictionDump truth = sort_by_sample_id(seval::read_prediction_dump(args.oracle_path));

  if (pseudo.n_classes() != truth.n_classes())
    throw std::invalid_argument("eval: class count differs between dumps");
  if (pseudo.sample_ids != truth.sample_ids)
    throw std::invalid_argument("eval: sample ids differ between the two dumps");
  const int n_classes = pseudo.n_classes();

  for (std::size_t i = 0; i < truth.labels.size(); ++i)
    if (truth.labels[i] < 0)
      throw std::invalid_argument("eval: oracle dump row with sample_id " +
                                  std::to_string(truth.sample_ids[i]) +
                                  " has no true label");
  seval::OracleUnlabeled oracle = seval::OracleUnlabeled::from_labels(truth.labels, n_classes);

  json tj = seval::load_json(args.tau_path);
  seval::ThresholdVector tau =
      seval::thresholds_from_json(tj.is_object() && tj.contains("tau") ? tj.at("tau") : tj);
  if (tau.size() != n_classes)
    throw std::invalid_argument("eval: threshold count does not match dump classes");

  seval::OffsetVector ones = seval::OffsetVector::ones(n_classes);
  seval::PseudoBatch batch = seval::make_pseudo_batch(pseudo.logits, pseudo.logits, ones, tau);

  // Old assignment: the dump's label column where present, otherwise the
  // dump's own prediction (so unannotated rows contribute no gain).
  std::vector<int> old_labels(batch.pred_labels.size());
  for (std::size_t i = 0; i < old_labels.size(); ++i)
    old_labels[i] = pseudo.labels[i] >= 0 ? pseudo.labels[i] : batch.pred_labels[i];

  seval::MetricsRow row;
  row.iter = 0;
  row.gain = seval::gain(old_labels, batch.pred_labels, oracle);
  row.cum_gain = row.gain;
  seval::Correctness c = seval::correctness(batch, oracle, tau);
  row.quantity = c.quantity;
  row.quality = c.quality;
  row.correctness = c.correctness;
  row.accuracy = seval::accuracy(batch.pred_labels, oracle.true_labels);
  row.balanced_accuracy =
      seval::balanced_accuracy(batch.pred_labels, oracle.true_labels, n_classes);
  seval::ClasswisePR pr = seval::classwise_pr(batch.pred_labels, oracle.true_labels, n_classes);
  row.precision = pr.precision;
  row.recall = pr.recall;

  std::cout << seval::metrics_csv_header(n_classes) << "\n"
            << seval::metrics_csv_row(row, n_classes) << "\n";
  return 0;
}

// ---- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::string config_path;
  std::string gamma_list;
  std::string seed_list;
  std::string method_list;
  std::string out_root;
};

struct Stats {
  double mean = 0.0;
  double sd = 0.0;
};

Stats mean_sd(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

int cmd_sweep(const SweepArgs& args) {
  seval::RunConfig base = seval::parse_run_config(seval::load_json(args.config_path));
  base.output_root = pick_output_root(args.out_root, base);

  std::vector<double> gammas;
  for (const std::string& g : split_list(args.gamma_list)) gammas.push_back(std::stod(g));
  std::vector<std::uint64_t> seeds;
  for (const std::string& s : split_list(args.seed_list)) seeds.push_back(std::stoull(s));
  std::vector<seval::Method> methods;
  if (args.method_list.empty()) {
    methods.push_back(base.train.method);
  } else {
    for (const std::string& m : split_list(args.method_list))
      methods.push_back(seval::method_from_name(m));
  }
  if (gammas.empty() || seeds.empty())
    throw std::invalid_argument("sweep: --gamma-list and --seeds must be non-empty");

  std::string csv =
      "gamma,method,seeds,test_acc_mean,test_acc_sd,balanced_acc_mean,balanced_acc_sd,"
      "adjusted_acc_mean,adjusted_acc_sd,adjusted_balanced_acc_mean,adjusted_balanced_acc_sd\n";
  for (double gamma : gammas) {
    for (seval::Method method : methods) {
      std::vector<double> acc, bacc, adj_acc, adj_bacc;
      for (std::uint64_t seed : seeds) {
        seval::RunConfig cfg = base;
        cfg.spec.gamma_l = gamma;
        cfg.spec.gamma_u = gamma;
        cfg.train.method = method;
        cfg.train.seed = seed;
        if (!cfg.dataset_seed_pinned) cfg.spec.seed = seed;
        seval::check_spec(cfg.spec);
        seval::check_train_config(cfg.train);
        seval::RunRecord rec = seval::train(cfg.spec, cfg.train);
        acc.push_back(rec.test_accuracy);
        bacc.push_back(rec.test_balanced_accuracy);
        adj_acc.push_back(rec.adjusted_test_accuracy);
        adj_bacc.push_back(rec.adjusted_test_balanced_accuracy);
        std::printf("gamma=%g method=%s seed=%llu balanced_acc=%.4f\n", gamma,
                    seval::method_name(method).c_str(),
                    static_cast<unsigned long long>(seed), rec.test_balanced_accuracy);
      }
      Stats a = mean_sd(acc), b = mean_sd(bacc), aa = mean_sd(adj_acc), ab = mean_sd(adj_bacc);
      csv += seval::format_double(gamma) + "," + seval::method_name(method) + "," +
             std::to_string(seeds.size());
      for (const Stats& s : {a, b, aa, ab})
        csv += "," + seval::format_double(s.mean) + "," + seval::format_double(s.sd);
      csv += "\n";
    }
  }

  std::filesystem::path out = std::filesystem::path(base.output_root) / "sweep_summary.csv";
  std::filesystem::create_directories(out.parent_path());
  seval::write_text_atomic(out, csv);
  std::cout << csv;
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudo-label refinement: offset/threshold estimation and SSL simulation"};
  app.require_subcommand(1);

  EstimateArgs est;
  CLI::App* estimate = app.add_subcommand(
      "estimate", "fit offsets and thresholds from a labeled prediction dump");
  estimate->add_option("predictions", est.predictions_path, "prediction dump CSV with true labels")
      ->required();
  estimate->add_option("--weights", est.weights, "class weighting: uniform or inverse-frequency")
      ->check(CLI::IsMember({"uniform", "inverse-frequency"}));
  estimate->add_option("--target-t", est.target_t, "precision target in (0,1)");
  estimate->add_option("--group-size", est.group_size, "classes per threshold group");
  estimate->add_option("--e1", est.e1, "predicted-mass starvation divisor");
  estimate->add_option("--e2", est.e2, "minimum true count per class");
  estimate->add_flag("--no-pi-floor", est.no_pi_floor, "disable the offset floor for starved classes");
  estimate->add_flag("--threshold-on-raw", est.threshold_on_raw,
                     "fit thresholds on raw rather than offset-refined probabilities");
  estimate->add_option("--out", est.out_path, "also write the JSON result to this file");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "run one training simulation from a JSON config");
  train->add_option("config", tr.config_path, "run config JSON file")->required();
  std::uint64_t seed_opt = 0;
  CLI::Option* seed_flag = train->add_option("--seed", seed_opt, "override train (and dataset) seed");
  train->add_option("--method", tr.method,
                    "override method: seval, fixed_threshold, la, da, flex_like");
  long long iters_opt = 0;
  CLI::Option* iters_flag = train->add_option("--iters", iters_opt, "override total iterations");
  train->add_option("--out-root", tr.out_root, "output root directory");
  train->add_option("--curriculum", tr.curriculum_path, "replay this schedule file (method seval)");
  train->add_flag("--dry-run", tr.dry_run, "print the resolved config and output dir, then exit");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a pseudo-label dump against an oracle dump");
  eval_cmd->add_option("--pseudo", ev.pseudo_path, "pseudo-label prediction dump CSV")->required();
  eval_cmd->add_option("--oracle", ev.oracle_path, "oracle dump CSV with true labels")->required();
  eval_cmd->add_option("--tau", ev.tau_path, "threshold JSON (array or {\"tau\": ...})")->required();

  SweepArgs sw;
  CLI::App* sweep = app.add_subcommand("sweep", "train over a grid of gammas, methods, and seeds");
  sweep->add_option("config", sw.config_path, "base run config JSON file")->required();
  sweep->add_option("--gamma-list", sw.gamma_list, "comma-separated imbalance ratios")->required();
  sweep->add_option("--seeds", sw.seed_list, "comma-separated seeds")->required();
  sweep->add_option("--methods", sw.method_list, "comma-separated methods (default: config method)");
  sweep->add_option("--out-root", sw.out_root, "output root directory");

  try {
    app.parse(argc, argv);
    if (*estimate) return cmd_estimate(est);
    if (*train) {
      if (seed_flag->count() > 0) tr.seed = seed_opt;
      if (iters_flag->count() > 0) tr.iters = iters_opt;
      return cmd_train(tr);
    }
    if (*eval_cmd) return cmd_eval(ev);
    if (*sweep) return cmd_sweep(sw);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
