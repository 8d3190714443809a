#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sliceroute/backbone/backbone.hpp"

namespace sliceroute {

inline constexpr int kCheckpointFormatVersion = 1;

struct ParamArray {
  num::Shape shape;
  std::vector<double> values;
};

// Named parameter arrays plus a flat echo of the configuration that produced
// them. Stored as JSON; doubles are written in shortest round-trip form.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::string kind;  // "P" or "S"
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, ParamArray>> params;

  const ParamArray& param(const std::string& name) const;
  bool has_param(const std::string& name) const;
  void add(const backbone::NamedTensors& tensors);
  // Copies stored values into the given tensors, checking names and shapes.
  void load_into(const backbone::NamedTensors& tensors) const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over names, shapes and the raw bytes of every value, hex encoded.
std::string parameter_hash(const Checkpoint& checkpoint);
std::string fnv1a_hex(const std::string& bytes);

namespace backbone {

std::map<std::string, std::string> config_echo(const BackboneConfig& config);
BackboneConfig config_from_echo(const std::map<std::string, std::string>& echo);

Checkpoint make_checkpoint(const BackboneParams& params);
BackboneParams params_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace backbone
}  // namespace sliceroute
