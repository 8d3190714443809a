#include "sliceroute/harness/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "sliceroute/errors.hpp"

namespace sliceroute::harness {

std::string dataset_hash(std::span<const Sample> samples) {
  std::string bytes;
  for (const auto& s : samples) bytes += datagen::sample_to_json_line(s) + "\n";
  return fnv1a_hex(bytes);
}

std::map<std::string, std::size_t> intent_counts(std::span<const Sample> samples) {
  std::map<std::string, std::size_t> out;
  for (const auto& s : samples) ++out[s.ground_truth_intent];
  return out;
}

void write_comparison(const Comparison& comparison, const std::filesystem::path& out_dir, const std::string& stem) {
  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir / (stem + ".csv"), std::ios::binary) << comparison_csv(comparison);
  std::ofstream(out_dir / (stem + ".txt"), std::ios::binary) << format_comparison(comparison);
}

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

EpochObserver epoch_logger(const Logger& log, const std::string& run) {
  if (!log) return {};
  return [log, run](const EpochRecord& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s epoch %zu: train %.6f  validation %.6f", run.c_str(), e.epoch, e.train_loss,
                  e.validation_loss);
    log(buf);
  };
}

ExperimentConfig for_run(const ExperimentConfig& settings, ModelKind kind, const std::string& run_id) {
  ExperimentConfig c = settings;
  c.model_kind = kind;
  c.run_id = run_id;
  if (is_slice_aware(kind) && c.backbone_checkpoint.empty()) c.backbone_checkpoint = "<in-memory>";
  return c;
}

EvalReport evaluate_run(const Checkpoint& checkpoint, const std::string& run_id, std::span<const Sample> test,
                        const slicing::SliceConfig& slices, const std::string& test_hash,
                        const std::map<std::string, std::size_t>& train_counts) {
  auto report = replication_accuracy(Router::from_checkpoint(checkpoint), test, slices, run_id, test_hash);
  attach_train_support(report, train_counts);
  return report;
}

void persist(const std::filesystem::path& out_dir, const std::string& run_id, const TrainResult& trained,
             const EvalReport& report) {
  if (out_dir.empty()) return;
  save_checkpoint(trained.checkpoint, out_dir / (run_id + ".checkpoint.json"));
  write_train_report(trained.report, out_dir / (run_id + ".train.json"));
  write_eval_report(report, out_dir / (run_id + ".eval.json"));
}

}  // namespace

FourWayResult run_four_way(const FourWayPlan& plan, const Logger& log) {
  datagen::TrafficConfig train_cfg = plan.traffic;
  train_cfg.tail_intents = plan.settings.slices.monitored_intents;
  datagen::TrafficConfig test_cfg = train_cfg;
  test_cfg.stream = train_cfg.stream + 1;
  test_cfg.num_samples = plan.test_samples;

  say(log, "generating " + std::to_string(train_cfg.num_samples) + " training and " +
               std::to_string(test_cfg.num_samples) + " test samples");
  const auto schema = datagen::schema_of(train_cfg);
  auto train_samples = datagen::generate(train_cfg);
  auto test = datagen::generate(test_cfg);
  const std::string test_hash = dataset_hash(test);
  if (!plan.out_dir.empty()) {
    for (auto [cfg, samples, name] : {std::tuple{&train_cfg, &train_samples, "train.jsonl"},
                                      std::tuple{&test_cfg, &test, "test.jsonl"}}) {
      const auto path = plan.out_dir / name;
      datagen::write_dataset(*samples, path);
      datagen::write_manifest(datagen::make_manifest(*samples, path, schema, cfg->echo(), cfg->seed),
                              datagen::manifest_path_for(path));
    }
  }

  const auto& slices = plan.settings.slices;
  auto cfg_p = for_run(plan.settings, ModelKind::P, "P");
  auto cfg_pu = for_run(plan.settings, ModelKind::P_UP, "P_UP");
  auto cfg_s = for_run(plan.settings, ModelKind::S, "S");
  auto cfg_su = for_run(plan.settings, ModelKind::S_UP, "S_UP");

  const auto data = prepare_training_data(cfg_p, train_samples, {}, schema);
  const auto data_up = prepare_training_data(cfg_pu, train_samples, {}, schema);
  FourWayResult result;
  result.train_intent_counts = intent_counts(data.train);

  std::vector<TrainResult> trained;
  say(log, "training P on " + std::to_string(data.train.size()) + " samples");
  trained.push_back(train_backbone(cfg_p, data, epoch_logger(log, "P")));
  say(log, "training P_UP on " + std::to_string(data_up.train.size()) + " samples");
  trained.push_back(train_backbone(cfg_pu, data_up, epoch_logger(log, "P_UP")));
  say(log, "training S");
  trained.push_back(train_slice_aware(cfg_s, data, backbone::params_from_checkpoint(trained[0].checkpoint),
                                      epoch_logger(log, "S")));
  say(log, "training S_UP");
  trained.push_back(train_slice_aware(cfg_su, data_up, backbone::params_from_checkpoint(trained[1].checkpoint),
                                      epoch_logger(log, "S_UP")));

  const char* ids[] = {"P", "P_UP", "S", "S_UP"};
  for (std::size_t i = 0; i < trained.size(); ++i) {
    result.reports.push_back(
        evaluate_run(trained[i].checkpoint, ids[i], test, slices, test_hash, result.train_intent_counts));
    result.train_reports.push_back(trained[i].report);
    persist(plan.out_dir, ids[i], trained[i], result.reports.back());
  }
  result.indicator_auc = indicator_auc(Router::from_checkpoint(trained[2].checkpoint), test);
  result.comparison = compare(result.reports, "P");
  if (!plan.out_dir.empty()) write_comparison(result.comparison, plan.out_dir, "comparison");
  return result;
}

std::string sweep_run_id(const SweepCell& cell) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_tau%g",
                cell.method == slice_aware::AttentionMethod::IndicatorOnly ? "ind" : "ind+exp", cell.tau);
  return buf;
}

std::vector<SweepCell> default_sweep_grid() {
  using slice_aware::AttentionMethod;
  return {{AttentionMethod::IndicatorOnly, 1.0},
          {AttentionMethod::IndicatorOnly, 0.1},
          {AttentionMethod::IndicatorPlusExpert, 1.0},
          {AttentionMethod::IndicatorPlusExpert, 0.1}};
}

SweepResult run_sweep(const ExperimentConfig& settings, const TrainingData& data, const Checkpoint& backbone,
                      std::span<const Sample> test, std::span<const SweepCell> cells,
                      const std::filesystem::path& out_dir, const Logger& log) {
  if (backbone.kind == "S") throw InputError("the sweep needs a backbone (P) checkpoint");
  const std::string test_hash = dataset_hash(test);
  const auto counts = intent_counts(data.train);
  const auto backbone_params = backbone::params_from_checkpoint(backbone);

  SweepResult result;
  result.reports.push_back(evaluate_run(backbone, "P", test, settings.slices, test_hash, counts));
  for (const auto& cell : cells) {
    auto cfg = for_run(settings, ModelKind::S, sweep_run_id(cell));
    cfg.attention_method = cell.method;
    cfg.tau = cell.tau;
    say(log, "training " + cfg.run_id);
    auto trained = train_slice_aware(cfg, data, backbone_params, epoch_logger(log, cfg.run_id));
    result.reports.push_back(evaluate_run(trained.checkpoint, cfg.run_id, test, settings.slices, test_hash, counts));
    result.train_reports.push_back(trained.report);
    persist(out_dir, cfg.run_id, trained, result.reports.back());
  }
  result.comparison = compare(result.reports, "P");
  if (!out_dir.empty()) write_comparison(result.comparison, out_dir, "sweep");
  return result;
}

}  // namespace sliceroute::harness
