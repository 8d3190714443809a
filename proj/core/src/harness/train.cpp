#include "sliceroute/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "sliceroute/errors.hpp"
#include "sliceroute/numerics/adam.hpp"
#include "sliceroute/numerics/ops.hpp"

namespace sliceroute::harness {

using num::Tensor;

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kPlanStream = 0x706c616e;
constexpr std::uint64_t kAugmentStream = 0x61756721;
constexpr std::uint64_t kInitStream = 0x696e6974;

std::vector<const Sample*> pointers(std::span<const Sample> samples, const std::vector<std::size_t>& idx) {
  std::vector<const Sample*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&samples[i]);
  return out;
}

void check_finite(double loss, std::size_t epoch, std::size_t batch, const char* what) {
  if (!std::isfinite(loss)) {
    throw TrainingError(std::string("non-finite ") + what + " loss " + std::to_string(loss) + " at epoch " +
                        std::to_string(epoch) + ", batch " + std::to_string(batch) +
                        "; lower train.lr or check the input data");
  }
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.values().begin(), p.values().end());
  return out;
}

void restore(std::vector<Tensor>& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) std::copy(values[i].begin(), values[i].end(), params[i].mutable_values().begin());
}

// Shared epoch loop: `step` trains on one batch and returns its mean loss,
// `validate` returns the mean validation loss.
template <typename Step, typename Validate>
void run_epochs(const ExperimentConfig& config, std::span<const Sample> train, std::vector<Tensor> params,
                Step step, Validate validate, TrainReport& report, const EpochObserver& observer) {
  num::AdamState adam;
  adam.lr = config.lr;
  report.initial_validation_loss = validate();
  double best = report.initial_validation_loss;
  auto best_values = snapshot(params);
  report.selected_epoch = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    auto rng = seeded(config.seed, kPlanStream, epoch);
    auto plan = batch_plan(train, config.batch_size, rng);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      num::zero_grads(params);
      double loss = step(plan[b], epoch, b);
      check_finite(loss, epoch, b, "training");
      num::adam_step(params, adam);
      total += loss * static_cast<double>(plan[b].size());
      count += plan[b].size();
    }
    EpochRecord rec{epoch, count ? total / static_cast<double>(count) : 0.0, validate()};
    check_finite(rec.validation_loss, epoch, plan.size(), "validation");
    report.epochs.push_back(rec);
    if (observer) observer(rec);
    if (config.selection == CheckpointSelection::FinalEpoch || rec.validation_loss < best) {
      best = rec.validation_loss;
      best_values = snapshot(params);
      report.selected_epoch = epoch;
    }
  }
  restore(params, best_values);
}

std::vector<slicing::SliceLabelVector> labels_for(std::span<const Sample> samples, const slicing::SliceConfig& slices) {
  std::vector<slicing::SliceLabelVector> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(slicing::assign_slices(s, slices));
  return out;
}

Tensor gather_rows(const std::vector<std::vector<double>>& cache, const std::vector<std::size_t>& idx,
                   std::size_t d) {
  std::vector<double> values;
  std::size_t rows = 0;
  for (auto i : idx) {
    values.insert(values.end(), cache[i].begin(), cache[i].end());
    rows += cache[i].size() / d;
  }
  return Tensor::from({rows, d}, std::move(values));
}

}  // namespace

std::vector<std::vector<std::size_t>> batch_plan(std::span<const Sample> samples, std::size_t batch_size,
                                                 std::mt19937_64& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].num_hypotheses()].push_back(i);
  std::vector<std::vector<std::size_t>> plan;
  for (auto& [n, members] : groups) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t start = 0; start < members.size(); start += batch_size) {
      auto end = std::min(members.size(), start + batch_size);
      plan.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(start),
                        members.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  std::shuffle(plan.begin(), plan.end(), rng);
  return plan;
}

TrainingData prepare_training_data(const ExperimentConfig& config, std::vector<Sample> train,
                                   std::vector<Sample> validation, const datagen::DatasetSchema& schema) {
  TrainingData data;
  data.schema = schema;
  if (validation.empty()) {
    auto parts = datagen::split(train, 1.0 - config.validation_ratio, config.seed);
    data.train = std::move(parts.first);
    data.validation = std::move(parts.second);
  } else {
    data.train = std::move(train);
    data.validation = std::move(validation);
  }
  if (is_upsampled(config.model_kind)) {
    auto up = datagen::upsample(data.train, config.slices, config.upsample_multiplier, config.seed);
    data.train = std::move(up.samples);
    data.warnings = std::move(up.warnings);
  }
  return data;
}

TrainingData load_training_data(const ExperimentConfig& config) {
  if (config.train_path.empty()) throw InputError("no training dataset configured (data.train)");
  if (!std::filesystem::exists(config.train_path)) throw InputError("training dataset not found: " + config.train_path.string());
  auto manifest_path = datagen::manifest_path_for(config.train_path);
  if (!std::filesystem::exists(manifest_path)) throw InputError("dataset manifest not found: " + manifest_path.string());
  auto manifest = datagen::read_manifest(manifest_path);
  auto train = datagen::read_dataset(config.train_path);
  std::vector<Sample> validation;
  if (!config.validation_path.empty()) validation = datagen::read_dataset(config.validation_path);
  return prepare_training_data(config, std::move(train), std::move(validation), manifest.schema);
}

backbone::BackboneConfig backbone_config_for(const ExperimentConfig& config, const datagen::DatasetSchema& schema) {
  auto c = schema.backbone_config();
  c.representation_dim = config.representation_dim;
  c.token_dim = config.token_dim;
  c.encoder_hidden = config.encoder_hidden;
  c.feature_dim = config.feature_dim;
  c.validate();
  return c;
}

TrainResult train_backbone(const ExperimentConfig& config, const TrainingData& data, const EpochObserver& observer) {
  if (data.train.empty()) throw InputError("training set is empty");
  auto params = backbone::BackboneParams::init(backbone_config_for(config, data.schema), seeded(config.seed, kInitStream)());
  const auto& bcfg = params.config;

  auto batch_loss = [&](std::span<const Sample> samples, const std::vector<std::size_t>& idx) {
    auto ptrs = pointers(samples, idx);
    auto batch = backbone::make_batch(ptrs, bcfg);
    auto scores = backbone::predict_base(backbone::encode_batch(batch, params), params);
    return backbone::base_loss_batch(scores, batch.ground_truth, batch.num_hypotheses);
  };
  auto validate = [&]() {
    if (data.validation.empty()) return 0.0;
    auto rng = seeded(config.seed, kPlanStream, 0);
    double total = 0.0;
    for (const auto& idx : batch_plan(data.validation, config.batch_size, rng)) {
      total += batch_loss(data.validation, idx).item() * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(data.validation.size());
  };
  auto step = [&](const std::vector<std::size_t>& idx, std::size_t, std::size_t) {
    Tensor loss = batch_loss(data.train, idx);
    loss.backward();
    return loss.item();
  };

  TrainResult result;
  auto& report = result.report;
  report.run_id = config.run_id;
  report.model_kind = config.model_kind;
  report.train_samples = data.train.size();
  report.validation_samples = data.validation.size();
  report.config = config.echo();
  report.warnings = data.warnings;
  run_epochs(config, data.train, params.trainable(), step, validate, report, observer);

  result.checkpoint = backbone::make_checkpoint(params);
  result.checkpoint.config["run.model_kind"] = to_string(config.model_kind);
  report.parameter_hash = parameter_hash(result.checkpoint);
  return result;
}

std::vector<std::vector<double>> encode_all(std::span<const Sample> samples, const backbone::BackboneParams& params,
                                            std::size_t batch_size) {
  auto frozen = params.clone();
  frozen.set_requires_grad(false);
  const std::size_t d = frozen.config.representation_dim;
  std::vector<std::vector<double>> cache(samples.size());
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].num_hypotheses()].push_back(i);
  for (const auto& [n, members] : groups) {
    for (std::size_t start = 0; start < members.size(); start += batch_size) {
      std::vector<std::size_t> idx(members.begin() + static_cast<std::ptrdiff_t>(start),
                                   members.begin() + static_cast<std::ptrdiff_t>(std::min(members.size(), start + batch_size)));
      auto ptrs = pointers(samples, idx);
      Tensor x = backbone::encode_batch(backbone::make_batch(ptrs, frozen.config), frozen);
      const auto& v = x.values();
      for (std::size_t b = 0; b < idx.size(); ++b) {
        cache[idx[b]].assign(v.begin() + static_cast<std::ptrdiff_t>(b * n * d),
                             v.begin() + static_cast<std::ptrdiff_t>((b + 1) * n * d));
      }
    }
  }
  return cache;
}

TrainResult train_slice_aware(const ExperimentConfig& config, const TrainingData& data,
                              const backbone::BackboneParams& backbone, const EpochObserver& observer) {
  if (data.train.empty()) throw InputError("training set is empty");
  slice_aware::AttentionConfig attention;
  attention.method = config.attention_method;
  attention.tau = config.tau;
  auto options = config.slice_options;
  options.max_hypotheses = std::max(options.max_hypotheses, data.schema.max_hypotheses);
  auto model = slice_aware::SliceAwareModel::init(backbone, config.slices, attention, options,
                                                  seeded(config.seed, kInitStream, 1)());
  const std::size_t d = model.d();
  const double stddev = options.noise_stddev();
  const bool frozen = options.freeze_backbone;

  const auto train_labels = labels_for(data.train, config.slices);
  const auto val_labels = labels_for(data.validation, config.slices);
  // Indicator biases start at the log-odds of each slice's training share.
  {
    auto bias = model.indicators.bias.mutable_values();
    for (std::size_t i = 0; i < model.k(); ++i) {
      double hits = 0.0;
      for (const auto& g : train_labels) hits += g.gamma[i];
      const double p = std::clamp(hits / static_cast<double>(train_labels.size()), 1e-4, 1.0 - 1e-4);
      bias[i] = std::log(p / (1.0 - p));
    }
  }
  std::vector<std::vector<double>> train_cache, val_cache;
  if (frozen) {
    train_cache = encode_all(data.train, model.backbone, config.batch_size);
    val_cache = encode_all(data.validation, model.backbone, config.batch_size);
  }

  auto augment_rng = seeded(config.seed, kAugmentStream);
  auto batch_loss = [&](std::span<const Sample> samples, const std::vector<std::vector<double>>& cache,
                        const std::vector<slicing::SliceLabelVector>& labels, const std::vector<std::size_t>& idx,
                        bool augment) {
    const std::size_t n = samples[idx.front()].num_hypotheses();
    std::vector<slicing::SliceLabelVector> gammas;
    std::vector<std::size_t> gt;
    for (auto i : idx) {
      gammas.push_back(labels[i]);
      gt.push_back(samples[i].ground_truth_index);
    }
    Tensor x;
    if (frozen) {
      x = gather_rows(cache, idx, d);
    } else {
      auto ptrs = pointers(samples, idx);
      x = backbone::encode_batch(backbone::make_batch(ptrs, model.backbone.config), model.backbone);
    }
    Tensor x_slice = augment ? slice_aware::augment_tail(x, gammas, n, stddev, augment_rng) : x;
    return slice_aware::total_loss_from_representation(x, x_slice, gammas, gt, n, model).total;
  };
  auto validate = [&]() {
    if (data.validation.empty()) return 0.0;
    auto rng = seeded(config.seed, kPlanStream, 0);
    double total = 0.0;
    for (const auto& idx : batch_plan(data.validation, config.batch_size, rng)) {
      total += batch_loss(data.validation, val_cache, val_labels, idx, false).item() * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(data.validation.size());
  };
  auto step = [&](const std::vector<std::size_t>& idx, std::size_t, std::size_t) {
    Tensor loss = batch_loss(data.train, train_cache, train_labels, idx, true);
    loss.backward();
    return loss.item();
  };

  TrainResult result;
  auto& report = result.report;
  report.run_id = config.run_id;
  report.model_kind = config.model_kind;
  report.train_samples = data.train.size();
  report.validation_samples = data.validation.size();
  report.config = config.echo();
  report.warnings = data.warnings;
  run_epochs(config, data.train, model.trainable(), step, validate, report, observer);

  result.checkpoint = slice_aware::make_checkpoint(model);
  result.checkpoint.config["run.model_kind"] = to_string(config.model_kind);
  report.parameter_hash = parameter_hash(result.checkpoint);
  return result;
}

TrainResult train(const ExperimentConfig& config, const EpochObserver& observer) {
  config.validate();
  auto data = load_training_data(config);
  if (!is_slice_aware(config.model_kind)) return train_backbone(config, data, observer);
  if (!std::filesystem::exists(config.backbone_checkpoint)) {
    throw InputError("backbone checkpoint not found: " + config.backbone_checkpoint.string());
  }
  auto backbone = backbone::params_from_checkpoint(load_checkpoint(config.backbone_checkpoint));
  return train_slice_aware(config, data, backbone, observer);
}

void write_train_report(const TrainReport& report, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "sliceroute-train-report";
  j["format_version"] = 1;
  j["run_id"] = report.run_id;
  j["model_kind"] = to_string(report.model_kind);
  j["train_samples"] = report.train_samples;
  j["validation_samples"] = report.validation_samples;
  j["initial_validation_loss"] = report.initial_validation_loss;
  auto epochs = nlohmann::ordered_json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_loss", e.validation_loss}});
  }
  j["epochs"] = std::move(epochs);
  j["selected_epoch"] = report.selected_epoch;
  j["parameter_hash"] = report.parameter_hash;
  j["config"] = report.config;
  j["warnings"] = report.warnings;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace sliceroute::harness
