// sliceroute command-line entry point.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sliceroute/allocator.hpp"
#include "sliceroute/datagen/datagen.hpp"
#include "sliceroute/errors.hpp"
#include "sliceroute/harness/compare.hpp"
#include "sliceroute/harness/config.hpp"
#include "sliceroute/harness/evaluate.hpp"
#include "sliceroute/harness/experiment.hpp"
#include "sliceroute/harness/train.hpp"

namespace fs = std::filesystem;
using namespace sliceroute;
using namespace sliceroute::harness;

namespace {

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;

  void attach(CLI::App* cmd, bool config_required) {
    cmd->add_option("--seed", seed, "Override the seed from the config file");
    auto* opt = cmd->add_option("--config", config, "Flat key=value config file");
    if (config_required) opt->required();
    opt->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output directory (default: $SLICEROUTE_OUT, else ./sliceroute-out)");
  }

  fs::path out_dir() const { return out.empty() ? output_directory("sliceroute-out") : fs::path(out); }
};

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

// Splits a combined file into the traffic.* part and everything else.
std::pair<KeyValues, KeyValues> split_sections(const KeyValues& all, std::size_t* test_samples) {
  KeyValues traffic, rest;
  for (const auto& [k, v] : all) {
    if (k.rfind("traffic.", 0) == 0) {
      traffic[k] = v;
    } else if (k == "experiment.test_samples") {
      *test_samples = std::stoul(v);
    } else {
      rest[k] = v;
    }
  }
  return {traffic, rest};
}

int cmd_generate(const CommonFlags& f, std::optional<std::size_t> samples, std::optional<std::uint64_t> stream,
                 const std::string& name) {
  auto cfg = f.config.empty() ? datagen::TrafficConfig{} : read_traffic_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (samples) cfg.num_samples = *samples;
  if (stream) cfg.stream = *stream;
  cfg.validate();
  const fs::path path = f.out_dir() / name;
  auto manifest = datagen::generate_to_file(cfg, path);
  std::cout << "wrote " << manifest.sample_count << " samples to " << path.string() << "\n";
  for (const auto& w : manifest.warnings) std::cout << "warning: " << w << "\n";
  return 0;
}

int cmd_train(const CommonFlags& f) {
  auto values = read_key_values(f.config);
  if (f.seed) values["run.seed"] = std::to_string(*f.seed);
  auto cfg = parse_experiment_config(values, fs::path(f.config).parent_path());
  if (cfg.run_id.empty()) cfg.run_id = to_string(cfg.model_kind);
  auto result = train(cfg, [&](const EpochRecord& e) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %zu: train %.6f  validation %.6f", e.epoch, e.train_loss, e.validation_loss);
    log_line(buf);
  });
  const fs::path dir = f.out_dir();
  save_checkpoint(result.checkpoint, dir / (cfg.run_id + ".checkpoint.json"));
  write_train_report(result.report, dir / (cfg.run_id + ".train.json"));
  std::cout << "checkpoint " << (dir / (cfg.run_id + ".checkpoint.json")).string() << " (parameter hash "
            << result.report.parameter_hash << ", selected epoch " << result.report.selected_epoch << ")\n";
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint_path, const std::string& dataset,
             const std::string& slice_file, std::string run_id, const std::string& train_dataset) {
  auto checkpoint = load_checkpoint(checkpoint_path);
  auto router = Router::from_checkpoint(checkpoint);
  slicing::SliceConfig slices;
  if (!slice_file.empty()) {
    slices = slicing::read_slice_config(slice_file);
  } else if (!f.config.empty()) {
    slices = read_experiment_config(f.config).slices;
  } else if (router.is_slice_aware()) {
    slices = router.model().slices;
  }
  auto test = datagen::read_dataset(dataset);
  if (run_id.empty()) run_id = fs::path(checkpoint_path).filename().string();
  if (auto pos = run_id.find(".checkpoint.json"); pos != std::string::npos) run_id.erase(pos);
  auto report = replication_accuracy(router, test, slices, run_id, datagen::file_hash(dataset));
  if (!train_dataset.empty()) {
    attach_train_support(report, datagen::read_manifest(datagen::manifest_path_for(train_dataset)).intent_counts);
  }
  const fs::path path = f.out_dir() / (run_id + ".eval.json");
  write_eval_report(report, path);
  std::cout << format_eval_report(report);
  std::cout << "report " << path.string() << "\n";
  return 0;
}

int cmd_compare(const CommonFlags& f, const std::vector<std::string>& files, const std::string& baseline,
                const std::string& stem) {
  std::vector<EvalReport> reports;
  for (const auto& file : files) reports.push_back(read_eval_report(file));
  auto comparison = compare(reports, baseline.empty() ? reports.front().run_id : baseline);
  write_comparison(comparison, f.out_dir(), stem);
  std::cout << format_comparison(comparison);
  return 0;
}

int cmd_sweep(const CommonFlags& f, const std::string& test_path, const std::vector<double>& taus) {
  auto values = read_key_values(f.config);
  if (f.seed) values["run.seed"] = std::to_string(*f.seed);
  values["run.model_kind"] = "S";
  auto cfg = parse_experiment_config(values, fs::path(f.config).parent_path());
  auto data = load_training_data(cfg);
  auto test = datagen::read_dataset(test_path.empty() ? cfg.test_path : fs::path(test_path));
  std::vector<SweepCell> cells;
  for (auto method : {slice_aware::AttentionMethod::IndicatorOnly, slice_aware::AttentionMethod::IndicatorPlusExpert}) {
    for (double tau : taus) cells.push_back({method, tau});
  }
  auto result = run_sweep(cfg, data, load_checkpoint(cfg.backbone_checkpoint), test, cells, f.out_dir(), log_line);
  std::cout << format_comparison(result.comparison);
  return 0;
}

int cmd_experiment(const CommonFlags& f) {
  std::size_t test_samples = 10000;
  auto [traffic_values, rest] =
      split_sections(f.config.empty() ? KeyValues{} : read_key_values(f.config), &test_samples);
  FourWayPlan plan;
  plan.traffic = parse_traffic_config(traffic_values);
  plan.test_samples = test_samples;
  if (f.seed) {
    plan.traffic.seed = *f.seed;
    rest["run.seed"] = std::to_string(*f.seed);
  }
  rest.erase("run.model_kind");
  plan.settings = parse_experiment_config(rest, f.config.empty() ? fs::path{} : fs::path(f.config).parent_path());
  if (plan.settings.slices.monitored_intents.empty()) {
    plan.settings.slices.monitored_intents = datagen::default_tail_intents(plan.traffic.num_intents);
  }
  plan.out_dir = f.out_dir();
  const auto start = std::chrono::steady_clock::now();
  auto result = run_four_way(plan, log_line);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << format_comparison(result.comparison);
  std::cout << "indicator AUC (test):";
  for (std::size_t i = 1; i < result.indicator_auc.size(); ++i) {
    char buf[32];
    if (result.indicator_auc[i]) std::snprintf(buf, sizeof buf, " %.3f", *result.indicator_auc[i]);
    else std::snprintf(buf, sizeof buf, " undef");
    std::cout << buf;
  }
  std::cout << "\nelapsed " << static_cast<long>(secs) << " s, outputs in " << plan.out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  sliceroute::tune_allocator();
  CLI::App app{"sliceroute: slice-aware skill routing experiments"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, cmp_flags, sweep_flags, exp_flags;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic traffic dataset");
  gen_flags.attach(gen, false);
  std::optional<std::size_t> gen_samples;
  std::optional<std::uint64_t> gen_stream;
  std::string gen_name = "traffic.jsonl";
  gen->add_option("--samples", gen_samples, "Override traffic.num_samples");
  gen->add_option("--stream", gen_stream, "Override traffic.stream (e.g. 1 for a test set)");
  gen->add_option("--name", gen_name, "Dataset file name inside the output directory");

  auto* tr = app.add_subcommand("train", "Train a model from an experiment config");
  train_flags.attach(tr, true);

  auto* ev = app.add_subcommand("eval", "Replication accuracy of a checkpoint on a dataset");
  eval_flags.attach(ev, false);
  std::string ev_checkpoint, ev_dataset, ev_slices, ev_run, ev_train;
  ev->add_option("--checkpoint", ev_checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", ev_dataset)->required()->check(CLI::ExistingFile);
  ev->add_option("--slices", ev_slices, "Slice config (one intent per line)")->check(CLI::ExistingFile);
  ev->add_option("--run-id", ev_run);
  ev->add_option("--train-dataset", ev_train, "Training dataset whose manifest gives slice volumes")
      ->check(CLI::ExistingFile);

  auto* cmp = app.add_subcommand("compare", "Compare evaluation reports against a baseline");
  cmp_flags.attach(cmp, false);
  std::vector<std::string> cmp_reports;
  std::string cmp_baseline, cmp_stem = "comparison";
  cmp->add_option("reports", cmp_reports, "Evaluation report files")->required()->check(CLI::ExistingFile);
  cmp->add_option("--baseline", cmp_baseline, "Baseline run id (default: first report)");
  cmp->add_option("--name", cmp_stem, "Output file stem");

  auto* sw = app.add_subcommand("sweep", "Attention method x temperature sweep over a trained backbone");
  sweep_flags.attach(sw, true);
  std::string sw_test;
  std::vector<double> sw_taus{1.0, 0.1};
  sw->add_option("--test", sw_test, "Test dataset (default: data.test)");
  sw->add_option("--tau", sw_taus, "Temperatures to sweep");

  auto* ex = app.add_subcommand("experiment", "Generate data, train P, P_UP, S, S_UP and compare");
  exp_flags.attach(ex, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(gen_flags, gen_samples, gen_stream, gen_name);
    if (tr->parsed()) return cmd_train(train_flags);
    if (ev->parsed()) return cmd_eval(eval_flags, ev_checkpoint, ev_dataset, ev_slices, ev_run, ev_train);
    if (cmp->parsed()) return cmd_compare(cmp_flags, cmp_reports, cmp_baseline, cmp_stem);
    if (sw->parsed()) return cmd_sweep(sweep_flags, sw_test, sw_taus);
    if (ex->parsed()) return cmd_experiment(exp_flags);
  } catch (const sliceroute::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
