#include "sliceroute/backbone/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include "sliceroute/errors.hpp"

namespace sliceroute {

using nlohmann::json;

const ParamArray& Checkpoint::param(const std::string& name) const {
  for (const auto& [n, p] : params) {
    if (n == name) return p;
  }
  throw FormatError("checkpoint has no parameter '" + name + "'");
}

bool Checkpoint::has_param(const std::string& name) const {
  for (const auto& [n, p] : params) {
    if (n == name) return true;
  }
  return false;
}

void Checkpoint::add(const backbone::NamedTensors& tensors) {
  for (const auto& [name, t] : tensors) {
    params.emplace_back(name, ParamArray{t.shape(), {t.values().begin(), t.values().end()}});
  }
}

void Checkpoint::load_into(const backbone::NamedTensors& tensors) const {
  for (const auto& [name, t] : tensors) {
    const ParamArray& stored = param(name);
    if (stored.shape != t.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + num::shape_string(stored.shape) +
                        ", model expects " + num::shape_string(t.shape()));
    }
    num::Tensor handle = t;
    std::copy(stored.values.begin(), stored.values.end(), handle.mutable_values().begin());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "sliceroute-checkpoint";
  doc["format_version"] = checkpoint.format_version;
  doc["kind"] = checkpoint.kind;
  doc["config"] = checkpoint.config;
  doc["parameter_hash"] = parameter_hash(checkpoint);
  json params = json::array();
  for (const auto& [name, p] : checkpoint.params) {
    params.push_back({{"name", name}, {"shape", p.shape}, {"values", p.values}});
  }
  doc["params"] = std::move(params);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (doc.at("format") != "sliceroute-checkpoint") throw FormatError("not a sliceroute checkpoint: " + path.string());
    Checkpoint c;
    c.format_version = doc.at("format_version").get<int>();
    if (c.format_version != kCheckpointFormatVersion) {
      throw FormatError("unsupported checkpoint format version " + std::to_string(c.format_version));
    }
    c.kind = doc.at("kind").get<std::string>();
    c.config = doc.at("config").get<std::map<std::string, std::string>>();
    for (const auto& p : doc.at("params")) {
      ParamArray arr{p.at("shape").get<num::Shape>(), p.at("values").get<std::vector<double>>()};
      if (num::numel(arr.shape) != arr.values.size()) {
        throw FormatError("checkpoint parameter '" + p.at("name").get<std::string>() + "' has inconsistent shape");
      }
      c.params.emplace_back(p.at("name").get<std::string>(), std::move(arr));
    }
    return c;
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

std::string parameter_hash(const Checkpoint& checkpoint) {
  std::string bytes;
  for (const auto& [name, p] : checkpoint.params) {
    bytes += name;
    bytes.push_back('\0');
    for (auto d : p.shape) bytes += std::to_string(d) + ",";
    const auto* raw = reinterpret_cast<const char*>(p.values.data());
    bytes.append(raw, p.values.size() * sizeof(double));
  }
  return fnv1a_hex(bytes);
}

namespace backbone {

std::map<std::string, std::string> config_echo(const BackboneConfig& c) {
  std::string intents;
  for (std::size_t i = 0; i < c.intents.size(); ++i) {
    if (c.intents[i].find('|') != std::string::npos) throw ConfigError("intent names may not contain '|'");
    intents += (i ? "|" : "") + c.intents[i];
  }
  return {
      {"backbone.vocab_size", std::to_string(c.vocab_size)},
      {"backbone.num_devices", std::to_string(c.num_devices)},
      {"backbone.num_context_values", std::to_string(c.num_context_values)},
      {"backbone.num_skills", std::to_string(c.num_skills)},
      {"backbone.num_interpretation_features", std::to_string(c.num_interpretation_features)},
      {"backbone.intents", intents},
      {"backbone.token_dim", std::to_string(c.token_dim)},
      {"backbone.encoder_hidden", std::to_string(c.encoder_hidden)},
      {"backbone.feature_dim", std::to_string(c.feature_dim)},
      {"backbone.representation_dim", std::to_string(c.representation_dim)},
  };
}

BackboneConfig config_from_echo(const std::map<std::string, std::string>& echo) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = echo.find(key);
    if (it == echo.end()) throw FormatError("checkpoint config is missing '" + key + "'");
    return it->second;
  };
  auto num = [&](const std::string& key) { return static_cast<std::size_t>(std::stoull(get(key))); };
  BackboneConfig c;
  c.vocab_size = num("backbone.vocab_size");
  c.num_devices = num("backbone.num_devices");
  c.num_context_values = num("backbone.num_context_values");
  c.num_skills = num("backbone.num_skills");
  c.num_interpretation_features = num("backbone.num_interpretation_features");
  std::stringstream ss(get("backbone.intents"));
  for (std::string item; std::getline(ss, item, '|');) c.intents.push_back(item);
  c.token_dim = num("backbone.token_dim");
  c.encoder_hidden = num("backbone.encoder_hidden");
  c.feature_dim = num("backbone.feature_dim");
  c.representation_dim = num("backbone.representation_dim");
  return c;
}

Checkpoint make_checkpoint(const BackboneParams& params) {
  Checkpoint c;
  c.kind = "P";
  c.config = config_echo(params.config);
  c.add(params.named());
  return c;
}

BackboneParams params_from_checkpoint(const Checkpoint& checkpoint) {
  BackboneParams p = BackboneParams::init(config_from_echo(checkpoint.config), 0);
  checkpoint.load_into(p.named());
  return p;
}

}  // namespace backbone
}  // namespace sliceroute
