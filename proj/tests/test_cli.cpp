#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "helpers.hpp"
#include "seval/config.hpp"
#include "seval/curriculum.hpp"
#include "seval/io.hpp"
#include "seval/offsets.hpp"
#include "seval/serialize.hpp"
#include "seval/thresholds.hpp"

namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;
using nlohmann::json;
using testutil::run_cli;

namespace {

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

json tiny_train_config() {
  json j;
  j["dataset"] = {{"generator", "gaussian_mixture"}, {"classes", 2},   {"n1", 12},
                  {"m1", 24},                        {"gamma_l", 2.0}, {"gamma_u", 2.0},
                  {"test_per_class", 10}};
  j["train"] = {{"method", "seval"},     {"seed", 5},          {"total_iters", 40},
                {"labeled_batch", 8},    {"unlabeled_batch", 16}, {"learning_rate", 0.05},
                {"eval_every", 20}};
  j["curriculum"] = {{"length", 2}};
  j["thresholds"] = {{"e2", 1}};
  return j;
}

// Dump whose logit argmax agrees with its own label column.
void write_self_consistent_dump(const fs::path& path, const std::vector<long long>& ids,
                                const std::vector<int>& labels) {
  seval::PredictionDump d;
  d.sample_ids = ids;
  d.labels = labels;
  d.logits = seval::Matrix(static_cast<int>(ids.size()), 2);
  for (int i = 0; i < d.logits.rows(); ++i) {
    d.logits(i, 0) = labels[static_cast<std::size_t>(i)] == 0 ? 2.0 : 0.0;
    d.logits(i, 1) = labels[static_cast<std::size_t>(i)] == 1 ? 2.0 : 0.0;
  }
  seval::write_prediction_dump(path, d);
}

}  // namespace

TEST_CASE("cli: no subcommand or an unknown one is invalid input") {
  REQUIRE(run_cli("").code == 2);
  REQUIRE(run_cli("bogus").code == 2);
  REQUIRE(run_cli("train --definitely-not-a-flag x.json").code == 2);
}

TEST_CASE("cli: help exits cleanly and lists the subcommands") {
  testutil::CliResult r = run_cli("--help");
  REQUIRE(r.code == 0);
  for (const char* name : {"estimate", "train", "eval", "sweep"})
    REQUIRE_THAT(r.output, ContainsSubstring(name));
}

TEST_CASE("cli estimate: matches the in-process fit on the same dump") {
  fs::path dir = testutil::fresh_dir("cli_est");
  seval::Rng rng(404);
  seval::LabeledBatch holdout = testutil::random_holdout(rng, 40, 3);
  seval::PredictionDump dump;
  dump.logits = holdout.values;
  dump.labels = holdout.labels;
  for (long long i = 0; i < 40; ++i) dump.sample_ids.push_back(i);
  seval::write_prediction_dump(dir / "preds.csv", dump);

  testutil::CliResult r =
      run_cli("estimate " + q(dir / "preds.csv") + " --out " + q(dir / "fit.json"));
  INFO(r.output);
  REQUIRE(r.code == 0);

  seval::ClassWeights w = seval::ClassWeights::inverse_frequency(holdout.labels, 3);
  auto [pi, report] =
      seval::estimate_step(holdout, w, seval::OffsetFitConfig{}, seval::ThresholdFitConfig{});

  json out = json::parse(r.output);
  REQUIRE(out.at("pi").get<std::vector<double>>() == pi.pi);
  REQUIRE(out.at("tau").get<std::vector<double>>() == report.tau.tau);
  REQUIRE(out.at("fallback").get<std::vector<int>>() == report.fallback_classes);
  REQUIRE(out.at("pi_floor").get<std::vector<int>>() == report.pi_floor_classes);

  // --out saves exactly what was printed.
  REQUIRE(seval::load_json(dir / "fit.json") == out);
}

TEST_CASE("cli estimate: every tuning flag reaches the fit") {
  fs::path dir = testutil::fresh_dir("cli_est_flags");
  seval::Rng rng(405);
  seval::LabeledBatch holdout = testutil::random_holdout(rng, 30, 2);
  seval::PredictionDump dump;
  dump.logits = holdout.values;
  dump.labels = holdout.labels;
  for (long long i = 0; i < 30; ++i) dump.sample_ids.push_back(i);
  seval::write_prediction_dump(dir / "preds.csv", dump);

  testutil::CliResult r = run_cli(
      "estimate " + q(dir / "preds.csv") +
      " --weights uniform --target-t 0.6 --group-size 2 --e1 3 --e2 1"
      " --no-pi-floor --threshold-on-raw");
  INFO(r.output);
  REQUIRE(r.code == 0);

  seval::ThresholdFitConfig tcfg;
  tcfg.target_t = 0.6;
  tcfg.group_size = 2;
  tcfg.min_predicted_e1 = 3;
  tcfg.min_true_e2 = 1;
  tcfg.pi_floor_rule = false;
  auto [pi, report] = seval::estimate_step(holdout, seval::ClassWeights::uniform(2),
                                           seval::OffsetFitConfig{}, tcfg,
                                           /*thresholds_on_refined=*/false);
  json out = json::parse(r.output);
  REQUIRE(out.at("pi").get<std::vector<double>>() == pi.pi);
  REQUIRE(out.at("tau").get<std::vector<double>>() == report.tau.tau);
  REQUIRE(out.at("pi_floor").get<std::vector<int>>().empty());
}

TEST_CASE("cli estimate: bad input exits with code 2") {
  fs::path dir = testutil::fresh_dir("cli_est_bad");
  REQUIRE(run_cli("estimate " + q(dir / "missing.csv")).code == 2);

  seval::write_text_atomic(dir / "unlabeled.csv",
                           "sample_id,label,logit_0,logit_1\n1,-1,0.5,0.5\n2,0,1.0,0.0\n");
  testutil::CliResult r = run_cli("estimate " + q(dir / "unlabeled.csv"));
  REQUIRE(r.code == 2);
  REQUIRE_THAT(r.output, ContainsSubstring("true label"));

  write_self_consistent_dump(dir / "ok.csv", {0, 1, 2, 3}, {0, 0, 1, 1});
  REQUIRE(run_cli("estimate " + q(dir / "ok.csv") + " --weights sqrt").code == 2);
  REQUIRE(run_cli("estimate " + q(dir / "ok.csv") + " --target-t 1.0").code == 2);
  REQUIRE(run_cli("estimate " + q(dir / "ok.csv") + " --group-size 5").code == 2);
}

TEST_CASE("cli eval: a dump scored against itself gains nothing") {
  fs::path dir = testutil::fresh_dir("cli_eval_self");
  write_self_consistent_dump(dir / "d.csv", {0, 1, 2, 3}, {0, 0, 1, 1});
  seval::save_json(dir / "tau.json", json{{"tau", {0.5, 0.5}}});

  testutil::CliResult r = run_cli("eval --pseudo " + q(dir / "d.csv") + " --oracle " +
                                  q(dir / "d.csv") + " --tau " + q(dir / "tau.json"));
  INFO(r.output);
  REQUIRE(r.code == 0);
  REQUIRE(r.output == seval::metrics_csv_header(2) + "\n0,0,0,1,1,1,1,1,1,1,1,1\n");
}

TEST_CASE("cli eval: row order does not matter and the gain is the hand value") {
  fs::path dir = testutil::fresh_dir("cli_eval_gain");

  // Oracle: ids 10..13, true labels 0,1,1,1 (logit columns are ignored).
  seval::PredictionDump oracle;
  oracle.sample_ids = {10, 11, 12, 13};
  oracle.labels = {0, 1, 1, 1};
  oracle.logits = seval::Matrix(4, 2);
  seval::write_prediction_dump(dir / "oracle.csv", oracle);

  // Pseudo dump in shuffled row order: the old assignment says class 1
  // everywhere, the new argmax fixes sample 10 (the only true-class-0 row).
  seval::PredictionDump pseudo;
  pseudo.sample_ids = {13, 10, 12, 11};
  pseudo.labels = {1, 1, 1, 1};
  pseudo.logits = seval::Matrix(4, 2);
  pseudo.logits(0, 1) = 3.0;  // id 13 -> class 1
  pseudo.logits(1, 0) = 3.0;  // id 10 -> class 0
  pseudo.logits(2, 1) = 3.0;  // id 12 -> class 1
  pseudo.logits(3, 1) = 3.0;  // id 11 -> class 1
  seval::write_prediction_dump(dir / "pseudo.csv", pseudo);

  seval::save_json(dir / "tau.json", json::array({0.0, 0.0}));

  testutil::CliResult r = run_cli("eval --pseudo " + q(dir / "pseudo.csv") + " --oracle " +
                                  q(dir / "oracle.csv") + " --tau " + q(dir / "tau.json"));
  INFO(r.output);
  REQUIRE(r.code == 0);
  // Sample 10 flips to correct: 1/M + 1/(m_0 * C) = 1/4 + 1/2 = 0.75.
  REQUIRE(r.output == seval::metrics_csv_header(2) + "\n0,0.75,0.75,1,1,1,1,1,1,1,1,1\n");
}

TEST_CASE("cli eval: mismatched inputs exit with code 2") {
  fs::path dir = testutil::fresh_dir("cli_eval_bad");
  write_self_consistent_dump(dir / "a.csv", {0, 1, 2, 3}, {0, 0, 1, 1});
  write_self_consistent_dump(dir / "b.csv", {0, 1, 2, 9}, {0, 0, 1, 1});
  seval::save_json(dir / "tau.json", json::array({0.0, 0.0}));
  seval::save_json(dir / "tau3.json", json::array({0.0, 0.0, 0.0}));

  testutil::CliResult ids = run_cli("eval --pseudo " + q(dir / "a.csv") + " --oracle " +
                                    q(dir / "b.csv") + " --tau " + q(dir / "tau.json"));
  REQUIRE(ids.code == 2);
  REQUIRE_THAT(ids.output, ContainsSubstring("sample ids"));

  seval::write_text_atomic(dir / "holey.csv",
                           "sample_id,label,logit_0,logit_1\n0,0,2,0\n1,-1,0,2\n"
                           "2,1,0,2\n3,1,0,2\n");
  testutil::CliResult noy = run_cli("eval --pseudo " + q(dir / "a.csv") + " --oracle " +
                                    q(dir / "holey.csv") + " --tau " + q(dir / "tau.json"));
  REQUIRE(noy.code == 2);
  REQUIRE_THAT(noy.output, ContainsSubstring("no true label"));

  REQUIRE(run_cli("eval --pseudo " + q(dir / "a.csv") + " --oracle " + q(dir / "a.csv") +
                  " --tau " + q(dir / "tau3.json"))
              .code == 2);
  REQUIRE(run_cli("eval --pseudo " + q(dir / "a.csv") + " --oracle " + q(dir / "a.csv"))
              .code == 2);  // --tau is required
}

TEST_CASE("cli train: a run writes its artifact set and reruns byte-identically") {
  fs::path dir = testutil::fresh_dir("cli_train");
  seval::save_json(dir / "config.json", tiny_train_config());
  fs::path root_a = dir / "roota";
  fs::path root_b = dir / "rootb";

  testutil::CliResult r1 =
      run_cli("train " + q(dir / "config.json") + " --out-root " + q(root_a));
  INFO(r1.output);
  REQUIRE(r1.code == 0);
  REQUIRE_THAT(r1.output, ContainsSubstring("output_dir: "));
  REQUIRE_THAT(r1.output, ContainsSubstring("seval seed=5"));

  seval::RunConfig cfg = seval::parse_run_config(tiny_train_config());
  std::string run_name = seval::config_hash(cfg) + "_seed5";
  fs::path out_a = root_a / run_name;
  REQUIRE(fs::exists(out_a));
  for (const char* name :
       {"resolved_config.json", "metrics.csv", "losses.csv", "curriculum.json", "summary.json"})
    REQUIRE(fs::exists(out_a / name));

  // 40 iterations, evals at 20 and 40.
  std::string losses = testutil::slurp(out_a / "losses.csv");
  REQUIRE(std::count(losses.begin(), losses.end(), '\n') == 41);
  std::string metrics = testutil::slurp(out_a / "metrics.csv");
  REQUIRE(std::count(metrics.begin(), metrics.end(), '\n') == 3);

  json summary = seval::load_json(out_a / "summary.json");
  REQUIRE(summary.at("method") == "seval");
  REQUIRE(summary.at("seed") == 5);
  REQUIRE(summary.at("config_hash") == seval::config_hash(cfg));
  for (const char* key : {"test_accuracy", "test_balanced_accuracy", "adjusted_test_accuracy",
                          "adjusted_test_balanced_accuracy", "final_gain", "final_cum_gain"})
    REQUIRE(summary.at(key).is_number());
  REQUIRE(summary.at("pi_final_raw").size() == 2);

  // Same config into a different root: identical bytes everywhere except the
  // recorded output root itself.
  testutil::CliResult r2 =
      run_cli("train " + q(dir / "config.json") + " --out-root " + q(root_b));
  REQUIRE(r2.code == 0);
  fs::path out_b = root_b / run_name;
  for (const char* name : {"metrics.csv", "losses.csv", "curriculum.json", "summary.json"})
    REQUIRE(testutil::slurp(out_a / name) == testutil::slurp(out_b / name));
  json ra = seval::load_json(out_a / "resolved_config.json");
  json rb = seval::load_json(out_b / "resolved_config.json");
  REQUIRE(ra.at("output_root") != rb.at("output_root"));
  ra.erase("output_root");
  rb.erase("output_root");
  REQUIRE(ra == rb);

  // The recorded schedule replays to the same artifacts.
  fs::path root_c = dir / "rootc";
  testutil::CliResult r3 =
      run_cli("train " + q(dir / "config.json") + " --out-root " + q(root_c) +
              " --curriculum " + q(out_a / "curriculum.json"));
  INFO(r3.output);
  REQUIRE(r3.code == 0);
  fs::path out_c = root_c / run_name;
  for (const char* name : {"metrics.csv", "losses.csv", "curriculum.json", "summary.json"})
    REQUIRE(testutil::slurp(out_a / name) == testutil::slurp(out_c / name));
}

TEST_CASE("cli train: overrides reshape the run") {
  fs::path dir = testutil::fresh_dir("cli_train_over");
  seval::save_json(dir / "config.json", tiny_train_config());
  fs::path root = dir / "runs";

  testutil::CliResult r = run_cli("train " + q(dir / "config.json") + " --out-root " +
                                  q(root) + " --seed 99 --method la --iters 30");
  INFO(r.output);
  REQUIRE(r.code == 0);
  REQUIRE_THAT(r.output, ContainsSubstring("la seed=99"));

  // Exactly one run directory, named for the overridden seed.
  fs::path outdir;
  int n_dirs = 0;
  for (const auto& e : fs::directory_iterator(root)) {
    outdir = e.path();
    ++n_dirs;
  }
  REQUIRE(n_dirs == 1);
  REQUIRE_THAT(outdir.filename().string(), ContainsSubstring("_seed99"));

  json summary = seval::load_json(outdir / "summary.json");
  REQUIRE(summary.at("method") == "la");
  REQUIRE(summary.at("seed") == 99);
  REQUIRE_FALSE(fs::exists(outdir / "curriculum.json"));  // schedule-free method

  std::string losses = testutil::slurp(outdir / "losses.csv");
  REQUIRE(std::count(losses.begin(), losses.end(), '\n') == 31);

  json resolved = seval::load_json(outdir / "resolved_config.json");
  REQUIRE(resolved.at("train").at("seed") == 99);
  REQUIRE(resolved.at("dataset").at("seed") == 99);  // unpinned seed follows
  REQUIRE(resolved.at("train").at("total_iters") == 30);
  REQUIRE(resolved.at("train").at("method") == "la");
}

TEST_CASE("cli train: dry run prints the plan without writing anything") {
  fs::path dir = testutil::fresh_dir("cli_train_dry");
  seval::save_json(dir / "config.json", tiny_train_config());
  fs::path root = dir / "runs";

  testutil::CliResult r =
      run_cli("train " + q(dir / "config.json") + " --out-root " + q(root) + " --dry-run");
  REQUIRE(r.code == 0);
  REQUIRE_THAT(r.output, ContainsSubstring("output_dir: "));
  REQUIRE_THAT(r.output, ContainsSubstring("\"method\": \"seval\""));
  REQUIRE_FALSE(fs::exists(root));
}

TEST_CASE("cli train: output root priority is flag, then environment, then config") {
  fs::path work = testutil::fresh_dir("cli_root_prio");
  json j = tiny_train_config();
  j["output_root"] = "cfg_root";
  seval::save_json(work / "config.json", j);

  testutil::CliResult from_cfg = run_cli("train config.json --dry-run", work.string());
  REQUIRE(from_cfg.code == 0);
  REQUIRE_THAT(from_cfg.output, ContainsSubstring("output_dir: cfg_root/"));

  testutil::CliResult from_env = run_cli("train config.json --dry-run", work.string(),
                                         "SEVAL_OUTPUT_ROOT='env_root'");
  REQUIRE(from_env.code == 0);
  REQUIRE_THAT(from_env.output, ContainsSubstring("output_dir: env_root/"));

  testutil::CliResult from_flag =
      run_cli("train config.json --dry-run --out-root flag_root", work.string(),
              "SEVAL_OUTPUT_ROOT='env_root'");
  REQUIRE(from_flag.code == 0);
  REQUIRE_THAT(from_flag.output, ContainsSubstring("output_dir: flag_root/"));
}

TEST_CASE("cli train: invalid input exits 2, runtime failure exits 3") {
  fs::path dir = testutil::fresh_dir("cli_train_bad");
  fs::path root = dir / "runs";

  REQUIRE(run_cli("train " + q(dir / "missing.json")).code == 2);

  seval::write_text_atomic(dir / "broken.json", "{oops");
  REQUIRE(run_cli("train " + q(dir / "broken.json")).code == 2);

  json unknown = tiny_train_config();
  unknown["train"]["typo"] = 1;
  seval::save_json(dir / "unknown.json", unknown);
  testutil::CliResult r = run_cli("train " + q(dir / "unknown.json"));
  REQUIRE(r.code == 2);
  REQUIRE_THAT(r.output, ContainsSubstring("train.typo"));

  seval::save_json(dir / "config.json", tiny_train_config());
  REQUIRE(run_cli("train " + q(dir / "config.json") + " --method fixmatch").code == 2);
  REQUIRE(run_cli("train " + q(dir / "config.json") + " --iters -5").code == 2);

  // A schedule file only makes sense for the learned-schedule method.
  seval::Curriculum cur;
  cur.length_L = 1;
  seval::CurriculumStep step;
  step.l = 1;
  step.pi = seval::OffsetVector::ones(2);
  step.tau = seval::ThresholdVector::constant(2, 0.5);
  cur.steps.push_back(step);
  cur.pi_final_raw = seval::OffsetVector::ones(2);
  seval::save_json(dir / "sched.json", seval::curriculum_to_json(cur));
  REQUIRE(run_cli("train " + q(dir / "config.json") + " --method fixed_threshold --curriculum " +
                  q(dir / "sched.json"))
              .code == 2);

  // A schedule whose class count disagrees with the dataset is invalid input.
  seval::Curriculum wide = cur;
  wide.steps[0].pi = seval::OffsetVector::ones(3);
  wide.steps[0].tau = seval::ThresholdVector::constant(3, 0.5);
  wide.pi_final_raw = seval::OffsetVector::ones(3);
  seval::save_json(dir / "sched3.json", seval::curriculum_to_json(wide));
  REQUIRE(run_cli("train " + q(dir / "config.json") + " --curriculum " + q(dir / "sched3.json"))
              .code == 2);

  json hot = tiny_train_config();
  hot["train"]["learning_rate"] = 1e308;
  seval::save_json(dir / "hot.json", hot);
  testutil::CliResult blow = run_cli("train " + q(dir / "hot.json") + " --out-root " + q(root));
  REQUIRE(blow.code == 3);
  REQUIRE_THAT(blow.output, ContainsSubstring("diverged"));
}

TEST_CASE("cli sweep: writes one summary row per gamma-method pair") {
  fs::path dir = testutil::fresh_dir("cli_sweep");
  json j = tiny_train_config();
  j["train"]["method"] = "fixed_threshold";
  j["train"]["total_iters"] = 30;
  j["train"]["eval_every"] = 15;
  seval::save_json(dir / "config.json", j);
  fs::path root = dir / "sweep_out";

  testutil::CliResult r = run_cli("sweep " + q(dir / "config.json") +
                                  " --gamma-list 1,3 --seeds 1,2 --out-root " + q(root));
  INFO(r.output);
  REQUIRE(r.code == 0);
  REQUIRE_THAT(r.output, ContainsSubstring("wrote "));

  std::string csv = testutil::slurp(root / "sweep_summary.csv");
  REQUIRE(csv.rfind("gamma,method,seeds,test_acc_mean,test_acc_sd,balanced_acc_mean,"
                    "balanced_acc_sd,adjusted_acc_mean,adjusted_acc_sd,"
                    "adjusted_balanced_acc_mean,adjusted_balanced_acc_sd\n",
                    0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);
  REQUIRE_THAT(csv, ContainsSubstring("\n1,fixed_threshold,2,"));
  REQUIRE_THAT(csv, ContainsSubstring("\n3,fixed_threshold,2,"));

  // The summary is also echoed to stdout.
  REQUIRE_THAT(r.output, ContainsSubstring("1,fixed_threshold,2,"));
}

TEST_CASE("cli sweep: an empty grid is invalid input") {
  fs::path dir = testutil::fresh_dir("cli_sweep_bad");
  seval::save_json(dir / "config.json", tiny_train_config());
  REQUIRE(run_cli("sweep " + q(dir / "config.json") + " --gamma-list , --seeds 1").code == 2);
  REQUIRE(run_cli("sweep " + q(dir / "config.json") + " --gamma-list 1").code == 2);
  REQUIRE(run_cli("sweep " + q(dir / "config.json") + " --gamma-list 1 --seeds 1 --methods nah")
              .code == 2);
}
