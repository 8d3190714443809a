#include "sliceroute/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "sliceroute/errors.hpp"

namespace sliceroute::harness {

namespace {

std::string trim(const std::string& s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a 64-bit unsigned integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, '|')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "|" : "") + items[i];
  return out;
}

std::filesystem::path resolve(const std::string& v, const std::filesystem::path& base) {
  if (v.empty()) return {};
  std::filesystem::path p(v);
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    auto key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_key_values(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_key_values(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

void write_key_values(const KeyValues& values, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << format_key_values(values);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::P: return "P";
    case ModelKind::P_UP: return "P_UP";
    case ModelKind::S: return "S";
    case ModelKind::S_UP: return "S_UP";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "P") return ModelKind::P;
  if (text == "P_UP" || text == "P_up") return ModelKind::P_UP;
  if (text == "S") return ModelKind::S;
  if (text == "S_UP" || text == "S_up") return ModelKind::S_UP;
  throw ConfigError("unknown model kind '" + text + "' (expected P, P_UP, S or S_UP)");
}

bool is_slice_aware(ModelKind kind) { return kind == ModelKind::S || kind == ModelKind::S_UP; }
bool is_upsampled(ModelKind kind) { return kind == ModelKind::P_UP || kind == ModelKind::S_UP; }

void ExperimentConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (!(validation_ratio > 0.0 && validation_ratio < 1.0)) throw ConfigError("data.validation_ratio must be in (0, 1)");
  if (!std::isfinite(upsample_multiplier) || upsample_multiplier < 1.0) {
    throw ConfigError("data.upsample_multiplier must be >= 1");
  }
  if (representation_dim == 0 || token_dim == 0 || encoder_hidden == 0 || feature_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("attention.tau must be positive");
  if (is_slice_aware(model_kind) && backbone_checkpoint.empty()) {
    throw ConfigError("model kind " + to_string(model_kind) + " needs model.backbone_checkpoint");
  }
  slices.validate();
}

KeyValues ExperimentConfig::echo() const {
  const auto& o = slice_options;
  return {
      {"run.model_kind", to_string(model_kind)},
      {"run.id", run_id},
      {"run.seed", std::to_string(seed)},
      {"data.train", train_path.string()},
      {"data.validation", validation_path.string()},
      {"data.test", test_path.string()},
      {"data.validation_ratio", fmt(validation_ratio)},
      {"data.upsample_multiplier", fmt(upsample_multiplier)},
      {"slices.monitored", join_list(slices.monitored_intents)},
      {"slices.base_covers_all", slices.base_covers_all ? "true" : "false"},
      {"train.epochs", std::to_string(epochs)},
      {"train.batch_size", std::to_string(batch_size)},
      {"train.lr", fmt(lr)},
      {"train.selection", selection == CheckpointSelection::BestValidation ? "best_validation" : "final_epoch"},
      {"train.freeze_backbone", o.freeze_backbone ? "true" : "false"},
      {"model.d", std::to_string(representation_dim)},
      {"model.token_dim", std::to_string(token_dim)},
      {"model.encoder_hidden", std::to_string(encoder_hidden)},
      {"model.feature_dim", std::to_string(feature_dim)},
      {"model.max_hypotheses", std::to_string(o.max_hypotheses)},
      {"model.backbone_checkpoint", backbone_checkpoint.string()},
      {"model.final_uses_shared_head", o.final_uses_shared_head ? "true" : "false"},
      {"attention.method", slice_aware::to_string(attention_method)},
      {"attention.tau", fmt(tau)},
      {"loss.base", fmt(o.loss_weights.base)},
      {"loss.indicator", fmt(o.loss_weights.indicator)},
      {"loss.expert", fmt(o.loss_weights.expert)},
      {"loss.final", fmt(o.loss_weights.final)},
      {"augment.sigma", fmt(o.augment_sigma)},
      {"augment.sigma_is_variance", o.augment_sigma_is_variance ? "true" : "false"},
  };
}

ExperimentConfig parse_experiment_config(const KeyValues& values, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  auto& o = c.slice_options;
  std::vector<std::string> monitored;
  bool covers_all = false;
  std::filesystem::path slice_file;

  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"run.model_kind", [&](auto&, auto& v) { c.model_kind = parse_model_kind(v); }},
      {"run.id", [&](auto&, auto& v) { c.run_id = v; }},
      {"run.seed", [&](auto& k, auto& v) { c.seed = to_u64(k, v); }},
      {"data.train", [&](auto&, auto& v) { c.train_path = resolve(v, base_dir); }},
      {"data.validation", [&](auto&, auto& v) { c.validation_path = resolve(v, base_dir); }},
      {"data.test", [&](auto&, auto& v) { c.test_path = resolve(v, base_dir); }},
      {"data.validation_ratio", [&](auto& k, auto& v) { c.validation_ratio = to_double(k, v); }},
      {"data.upsample_multiplier", [&](auto& k, auto& v) { c.upsample_multiplier = to_double(k, v); }},
      {"slices.monitored", [&](auto&, auto& v) { monitored = split_list(v); }},
      {"slices.file", [&](auto&, auto& v) { slice_file = resolve(v, base_dir); }},
      {"slices.base_covers_all", [&](auto& k, auto& v) { covers_all = to_bool(k, v); }},
      {"train.epochs", [&](auto& k, auto& v) { c.epochs = to_size(k, v); }},
      {"train.batch_size", [&](auto& k, auto& v) { c.batch_size = to_size(k, v); }},
      {"train.lr", [&](auto& k, auto& v) { c.lr = to_double(k, v); }},
      {"train.selection",
       [&](auto& k, auto& v) {
         if (v == "best_validation") c.selection = CheckpointSelection::BestValidation;
         else if (v == "final_epoch") c.selection = CheckpointSelection::FinalEpoch;
         else throw ConfigError(k + ": expected best_validation or final_epoch, got '" + v + "'");
       }},
      {"train.freeze_backbone", [&](auto& k, auto& v) { o.freeze_backbone = to_bool(k, v); }},
      {"model.d", [&](auto& k, auto& v) { c.representation_dim = to_size(k, v); }},
      {"model.token_dim", [&](auto& k, auto& v) { c.token_dim = to_size(k, v); }},
      {"model.encoder_hidden", [&](auto& k, auto& v) { c.encoder_hidden = to_size(k, v); }},
      {"model.feature_dim", [&](auto& k, auto& v) { c.feature_dim = to_size(k, v); }},
      {"model.max_hypotheses", [&](auto& k, auto& v) { o.max_hypotheses = to_size(k, v); }},
      {"model.backbone_checkpoint", [&](auto&, auto& v) { c.backbone_checkpoint = resolve(v, base_dir); }},
      {"model.final_uses_shared_head", [&](auto& k, auto& v) { o.final_uses_shared_head = to_bool(k, v); }},
      {"attention.method", [&](auto&, auto& v) { c.attention_method = slice_aware::parse_attention_method(v); }},
      {"attention.tau", [&](auto& k, auto& v) { c.tau = to_double(k, v); }},
      {"loss.base", [&](auto& k, auto& v) { o.loss_weights.base = to_double(k, v); }},
      {"loss.indicator", [&](auto& k, auto& v) { o.loss_weights.indicator = to_double(k, v); }},
      {"loss.expert", [&](auto& k, auto& v) { o.loss_weights.expert = to_double(k, v); }},
      {"loss.final", [&](auto& k, auto& v) { o.loss_weights.final = to_double(k, v); }},
      {"augment.sigma", [&](auto& k, auto& v) { o.augment_sigma = to_double(k, v); }},
      {"augment.sigma_is_variance", [&](auto& k, auto& v) { o.augment_sigma_is_variance = to_bool(k, v); }},
  };
  for (const auto& [key, value] : values) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown experiment config key '" + key + "'");
    it->second(key, value);
  }
  if (!slice_file.empty()) {
    if (!monitored.empty()) throw ConfigError("set either slices.file or slices.monitored, not both");
    c.slices = slicing::read_slice_config(slice_file);
    c.slices.base_covers_all = covers_all;
  } else {
    c.slices = slicing::SliceConfig(monitored, covers_all);
  }
  c.validate();
  return c;
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_key_values(path), path.parent_path());
}

datagen::TrafficConfig parse_traffic_config(const KeyValues& values) {
  datagen::TrafficConfig c;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"traffic.num_samples", [&](auto& k, auto& v) { c.num_samples = to_size(k, v); }},
      {"traffic.num_intents", [&](auto& k, auto& v) { c.num_intents = to_size(k, v); }},
      {"traffic.zipf_exponent", [&](auto& k, auto& v) { c.zipf_exponent = to_double(k, v); }},
      {"traffic.tail_intents", [&](auto&, auto& v) { c.tail_intents = split_list(v); }},
      {"traffic.vocab_size", [&](auto& k, auto& v) { c.vocab_size = to_size(k, v); }},
      {"traffic.utterance_length_min", [&](auto& k, auto& v) { c.utterance_length_range.first = to_size(k, v); }},
      {"traffic.utterance_length_max", [&](auto& k, auto& v) { c.utterance_length_range.second = to_size(k, v); }},
      {"traffic.hypotheses_min", [&](auto& k, auto& v) { c.hypotheses_range.first = to_size(k, v); }},
      {"traffic.hypotheses_max", [&](auto& k, auto& v) { c.hypotheses_range.second = to_size(k, v); }},
      {"traffic.num_skills", [&](auto& k, auto& v) { c.num_skills = to_size(k, v); }},
      {"traffic.num_devices", [&](auto& k, auto& v) { c.num_devices = to_size(k, v); }},
      {"traffic.num_context_values", [&](auto& k, auto& v) { c.num_context_values = to_size(k, v); }},
      {"traffic.label_noise_rate", [&](auto& k, auto& v) { c.label_noise_rate = to_double(k, v); }},
      {"traffic.seed", [&](auto& k, auto& v) { c.seed = to_u64(k, v); }},
      {"traffic.stream", [&](auto& k, auto& v) { c.stream = to_u64(k, v); }},
      {"traffic.signature_tokens", [&](auto& k, auto& v) { c.signature_tokens = to_size(k, v); }},
      {"traffic.intent_overlap", [&](auto& k, auto& v) { c.intent_overlap = to_double(k, v); }},
      {"traffic.signal_rate", [&](auto& k, auto& v) { c.signal_rate = to_double(k, v); }},
      {"traffic.confidence_buckets", [&](auto& k, auto& v) { c.confidence_buckets = to_size(k, v); }},
      {"traffic.override_from_rank", [&](auto& k, auto& v) { c.override_from_rank = to_size(k, v); }},
      {"traffic.skills_per_intent", [&](auto& k, auto& v) { c.skills_per_intent = to_size(k, v); }},
  };
  for (const auto& [key, value] : values) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown traffic config key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

datagen::TrafficConfig read_traffic_config(const std::filesystem::path& path) {
  return parse_traffic_config(read_key_values(path));
}

std::filesystem::path output_directory(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("SLICEROUTE_OUT"); env != nullptr && *env != '\0') return env;
  return fallback;
}

}  // namespace sliceroute::harness
