#include "sliceroute/datagen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include "sliceroute/backbone/checkpoint.hpp"
#include "sliceroute/errors.hpp"

namespace sliceroute::datagen {

using nlohmann::ordered_json;

namespace {

constexpr std::size_t kShardSize = 4096;
constexpr std::size_t kDomains = 8;

const char* const kIntentNames[] = {
    "Play Music",      "Get Weather",      "Set Alarm",        "Play Radio",      "Set Timer",
    "Get News",        "Turn On Light",    "Add To List",      "Play Podcast",    "Call Contact",
    "Get Time",        "Volume Up",        "Read Audiobook",   "Get Traffic",     "Set Reminder",
    "Buy Item",        "Play Video",       "Get Sports Score", "Tell Joke",       "Turn Off Light",
    "Select Music",    "Get Recipe",       "Translate Phrase", "Order Food",      "Book Ride",
    "Check Calendar",  "Send Message",     "Get Stock Price",  "Set Thermostat",  "Find Restaurant",
    "Buy Book",        "Play Game",        "Get Definition",   "Track Package",   "Lock Door",
    "Start Meditation", "Get Horoscope",   "Convert Units",    "Book Hotel",      "Find Movie Times",
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

void TrafficConfig::validate() const {
  if (num_intents == 0) throw ConfigError("num_intents must be positive");
  if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent)) throw ConfigError("zipf_exponent must be >= 0");
  if (vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
  if (utterance_length_range.first == 0 || utterance_length_range.first > utterance_length_range.second) {
    throw ConfigError("utterance length range must satisfy 1 <= min <= max");
  }
  if (hypotheses_range.first == 0 || hypotheses_range.first > hypotheses_range.second) {
    throw ConfigError("hypotheses range must satisfy 1 <= min <= max");
  }
  if (num_skills == 0 || num_devices == 0) throw ConfigError("num_skills and num_devices must be positive");
  if (!(label_noise_rate >= 0.0 && label_noise_rate <= 1.0)) throw ConfigError("label_noise_rate must be in [0, 1]");
  if (!(intent_overlap >= 0.0 && intent_overlap <= 1.0)) throw ConfigError("intent_overlap must be in [0, 1]");
  if (!(signal_rate >= 0.0 && signal_rate <= 1.0)) throw ConfigError("signal_rate must be in [0, 1]");
  if (signature_tokens == 0 || confidence_buckets < 2 || skills_per_intent == 0) {
    throw ConfigError("signature_tokens, skills_per_intent must be positive and confidence_buckets >= 2");
  }
  auto names = intent_names(num_intents);
  std::set<std::string> inventory(names.begin(), names.end());
  std::set<std::string> seen;
  for (const auto& t : tail_intents) {
    if (!inventory.count(t)) throw ConfigError("tail intent '" + t + "' is not in the generated inventory");
    if (!seen.insert(t).second) throw ConfigError("tail intent '" + t + "' listed twice");
  }
}

std::map<std::string, std::string> TrafficConfig::echo() const {
  std::string tails;
  for (std::size_t i = 0; i < tail_intents.size(); ++i) tails += (i ? "|" : "") + tail_intents[i];
  return {
      {"traffic.num_samples", std::to_string(num_samples)},
      {"traffic.num_intents", std::to_string(num_intents)},
      {"traffic.zipf_exponent", fmt(zipf_exponent)},
      {"traffic.tail_intents", tails},
      {"traffic.vocab_size", std::to_string(vocab_size)},
      {"traffic.utterance_length_min", std::to_string(utterance_length_range.first)},
      {"traffic.utterance_length_max", std::to_string(utterance_length_range.second)},
      {"traffic.hypotheses_min", std::to_string(hypotheses_range.first)},
      {"traffic.hypotheses_max", std::to_string(hypotheses_range.second)},
      {"traffic.num_skills", std::to_string(num_skills)},
      {"traffic.num_devices", std::to_string(num_devices)},
      {"traffic.num_context_values", std::to_string(num_context_values)},
      {"traffic.label_noise_rate", fmt(label_noise_rate)},
      {"traffic.seed", std::to_string(seed)},
      {"traffic.stream", std::to_string(stream)},
      {"traffic.signature_tokens", std::to_string(signature_tokens)},
      {"traffic.intent_overlap", fmt(intent_overlap)},
      {"traffic.signal_rate", fmt(signal_rate)},
      {"traffic.confidence_buckets", std::to_string(confidence_buckets)},
      {"traffic.override_from_rank", std::to_string(override_from_rank)},
      {"traffic.skills_per_intent", std::to_string(skills_per_intent)},
  };
}

std::vector<std::string> intent_names(std::size_t n) {
  std::vector<std::string> names;
  constexpr std::size_t known = sizeof(kIntentNames) / sizeof(kIntentNames[0]);
  for (std::size_t i = 0; i < n; ++i) {
    names.push_back(i < known ? std::string(kIntentNames[i]) : "Intent " + std::to_string(i + 1));
  }
  return names;
}

std::vector<std::string> default_tail_intents(std::size_t num_intents) {
  const auto names = intent_names(num_intents);
  std::vector<std::string> tails;
  for (std::size_t i = 1; i < names.size(); i += 2) tails.push_back(names[i]);
  return tails;
}

TrafficWorld build_world(const TrafficConfig& config) {
  config.validate();
  auto rng = derived_rng(config.seed, 0x776f726c64ULL, 0);
  const std::size_t n = config.num_intents, m = config.signature_tokens;
  TrafficWorld w;
  w.intents = intent_names(n);

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w.popularity.push_back(std::pow(static_cast<double>(i + 1), -config.zipf_exponent));
    total += w.popularity.back();
  }
  for (auto& p : w.popularity) p /= total;

  // Signature tokens are drawn without replacement while the vocabulary lasts.
  std::vector<std::size_t> pool(config.vocab_size);
  std::iota(pool.begin(), pool.end(), 0);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::size_t next_fresh = 0;
  auto fresh_token = [&] {
    if (next_fresh < pool.size()) return pool[next_fresh++];
    return uniform_index(rng, config.vocab_size);
  };

  const std::size_t shared = static_cast<std::size_t>(std::lround(config.intent_overlap * static_cast<double>(m)));
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t partner = i == 0 ? (n > 1 ? 1 : 0) : (i - 1) / 2;
    w.partner.push_back(partner);
    std::vector<std::size_t> sig;
    if (i > 0) {
      auto borrowed = w.signatures[partner];
      std::shuffle(borrowed.begin(), borrowed.end(), rng);
      for (std::size_t k = 0; k < std::min(shared, borrowed.size()); ++k) sig.push_back(borrowed[k]);
    }
    while (sig.size() < m) sig.push_back(fresh_token());
    w.signatures.push_back(std::move(sig));

    std::vector<std::size_t> skills;
    for (std::size_t j = 0; j < config.skills_per_intent; ++j) {
      skills.push_back((i * config.skills_per_intent + j) % config.num_skills);
    }
    w.skills.push_back(std::move(skills));

    std::vector<std::size_t> rule(config.num_devices);
    for (auto& r : rule) r = uniform_index(rng, config.skills_per_intent);
    w.device_rule.push_back(std::move(rule));
  }
  w.num_interpretation_features = config.confidence_buckets + kDomains;
  return w;
}

backbone::BackboneConfig DatasetSchema::backbone_config() const {
  backbone::BackboneConfig c;
  c.vocab_size = vocab_size;
  c.num_devices = num_devices;
  c.num_context_values = num_context_values;
  c.num_skills = num_skills;
  c.num_interpretation_features = num_interpretation_features;
  c.intents = intents;
  return c;
}

DatasetSchema schema_of(const TrafficConfig& config) {
  config.validate();
  DatasetSchema s;
  s.vocab_size = config.vocab_size;
  s.num_devices = config.num_devices;
  s.num_context_values = std::max<std::size_t>(config.num_context_values, 1);
  s.num_skills = config.num_skills;
  s.num_interpretation_features = config.confidence_buckets + kDomains;
  s.max_hypotheses = config.hypotheses_range.second;
  s.intents = intent_names(config.num_intents);
  return s;
}

namespace {

struct Candidate {
  std::size_t intent;
  std::size_t skill;
};

Sample draw_sample(const TrafficConfig& config, const TrafficWorld& w, std::discrete_distribution<std::size_t>& zipf,
                   std::mt19937_64& rng, std::size_t index) {
  const std::size_t C = config.confidence_buckets;
  std::bernoulli_distribution coin(0.5);
  Sample s;
  s.id = "s" + std::to_string(config.stream) + "-" + std::to_string(index);

  const std::size_t intent = zipf(rng);
  const std::size_t device = uniform_index(rng, config.num_devices);
  s.signals.device_type = device;
  if (config.num_context_values > 0) {
    const std::size_t contexts = 1 + uniform_index(rng, 2);
    for (std::size_t c = 0; c < contexts; ++c) s.signals.shared_context.push_back(uniform_index(rng, config.num_context_values));
  }

  const auto [lmin, lmax] = config.utterance_length_range;
  const std::size_t length = lmin + uniform_index(rng, lmax - lmin + 1);
  std::bernoulli_distribution signal(config.signal_rate);
  const auto& sig = w.signatures[intent];
  for (std::size_t t = 0; t < length; ++t) {
    s.signals.utterance_tokens.push_back(signal(rng) ? sig[uniform_index(rng, sig.size())]
                                                     : uniform_index(rng, config.vocab_size));
  }

  const auto [nmin, nmax] = config.hypotheses_range;
  const std::size_t n = nmin + uniform_index(rng, nmax - nmin + 1);
  std::vector<Candidate> cands;
  cands.push_back({intent, w.skills[intent][w.device_rule[intent][device]]});
  auto present = [&](const Candidate& c) {
    return std::any_of(cands.begin(), cands.end(),
                       [&](const Candidate& o) { return o.intent == c.intent && o.skill == c.skill; });
  };
  auto try_add = [&](const Candidate& c) {
    if (cands.size() < n && !present(c)) cands.push_back(c);
  };
  // same interpretation routed to another skill
  for (auto skill : w.skills[intent]) try_add({intent, skill});
  // the confusable partner interpretation
  const std::size_t partner = w.partner[intent];
  if (partner != intent) try_add({partner, w.skills[partner][w.device_rule[partner][device]]});
  std::size_t guard = 0;
  while (cands.size() < n && guard++ < 64) {
    const std::size_t other = uniform_index(rng, config.num_intents);
    try_add({other, w.skills[other][w.device_rule[other][device]]});
  }

  // Interpretation confidence. Popular intents are recognised confidently.
  // Past override_from_rank the NLU tends to prefer the partner reading while
  // the production rules still route to the intent itself.
  const bool overridden = intent >= config.override_from_rank && partner != intent;
  const std::size_t own_conf = overridden ? uniform_index(rng, C - 1) : C - 1 - (coin(rng) ? 0 : 1);
  for (std::size_t h = 0; h < cands.size(); ++h) {
    Hypothesis hyp;
    hyp.intent = w.intents[cands[h].intent];
    hyp.skill = cands[h].skill;
    std::size_t conf;
    if (cands[h].intent == intent) {
      conf = own_conf;
    } else if (cands[h].intent == partner && overridden) {
      conf = C - 1 - (coin(rng) ? 0 : 1);
    } else {
      conf = uniform_index(rng, C - 1);
    }
    hyp.interpretation_features = {conf, C + cands[h].intent % kDomains};
    s.hypotheses.push_back(std::move(hyp));
  }

  std::vector<std::size_t> order(s.hypotheses.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Hypothesis> shuffled;
  for (auto o : order) shuffled.push_back(s.hypotheses[o]);
  s.hypotheses = std::move(shuffled);
  s.ground_truth_index = static_cast<std::size_t>(std::find(order.begin(), order.end(), 0) - order.begin());

  std::bernoulli_distribution noise(config.label_noise_rate);
  if (s.hypotheses.size() > 1 && noise(rng)) {
    std::size_t flip = uniform_index(rng, s.hypotheses.size() - 1);
    if (flip >= s.ground_truth_index) ++flip;
    s.ground_truth_index = flip;
  }
  s.ground_truth_intent = s.hypotheses[s.ground_truth_index].intent;
  return s;
}

}  // namespace

std::vector<Sample> generate(const TrafficConfig& config) {
  const TrafficWorld world = build_world(config);
  std::vector<Sample> out;
  out.reserve(config.num_samples);
  const std::size_t shards = (config.num_samples + kShardSize - 1) / kShardSize;
  for (std::size_t shard = 0; shard < shards; ++shard) {
    auto rng = derived_rng(config.seed, config.stream + 1, shard);
    std::discrete_distribution<std::size_t> zipf(world.popularity.begin(), world.popularity.end());
    const std::size_t end = std::min(config.num_samples, (shard + 1) * kShardSize);
    for (std::size_t i = shard * kShardSize; i < end; ++i) out.push_back(draw_sample(config, world, zipf, rng, i));
  }
  return out;
}

DatasetManifest generate_to_file(const TrafficConfig& config, const std::filesystem::path& path) {
  auto samples = generate(config);
  write_dataset(samples, path);
  auto manifest = make_manifest(samples, path, schema_of(config), config.echo(), config.seed);
  write_manifest(manifest, manifest_path_for(path));
  return manifest;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split(std::span<const Sample> dataset, double ratio,
                                                          std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw SplitError("split ratio must be in (0, 1), got " + fmt(ratio));
  const std::size_t n = dataset.size();
  const auto first = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  if (first == 0 || first == n) {
    throw SplitError("splitting " + std::to_string(n) + " samples at ratio " + fmt(ratio) + " leaves an empty part");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = derived_rng(seed, 0x73706c6974ULL, 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::pair<std::vector<Sample>, std::vector<Sample>> parts;
  for (std::size_t i = 0; i < n; ++i) (i < first ? parts.first : parts.second).push_back(dataset[order[i]]);
  return parts;
}

UpsampleResult upsample(std::span<const Sample> dataset, const slicing::SliceConfig& config, double multiplier,
                        std::uint64_t seed) {
  if (!std::isfinite(multiplier) || multiplier < 1.0) {
    throw ConfigError("upsample multiplier must be finite and >= 1, got " + fmt(multiplier));
  }
  UpsampleResult result;
  result.samples.assign(dataset.begin(), dataset.end());
  for (const auto& intent : config.monitored_intents) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset[i].ground_truth_intent == intent) members.push_back(i);
    }
    if (members.empty()) {
      result.warnings.push_back("tail slice '" + intent + "' is empty; not upsampled");
      continue;
    }
    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(members.size()) * multiplier));
    for (std::size_t extra = 0; members.size() + extra < target; ++extra) {
      Sample copy = dataset[members[extra % members.size()]];
      copy.id += "#up" + std::to_string(extra / members.size() + 1);
      result.samples.push_back(std::move(copy));
    }
  }
  auto rng = derived_rng(seed, 0x7570ULL, 0);
  std::shuffle(result.samples.begin(), result.samples.end(), rng);
  return result;
}

std::string sample_to_json_line(const Sample& s) {
  ordered_json hyps = ordered_json::array();
  for (const auto& h : s.hypotheses) {
    hyps.push_back({{"intent", h.intent}, {"skill", h.skill}, {"interpretation_features", h.interpretation_features}});
  }
  ordered_json j;
  j["format_version"] = kDatasetFormatVersion;
  j["id"] = s.id;
  j["utterance_tokens"] = s.signals.utterance_tokens;
  j["device_type"] = s.signals.device_type;
  j["shared_context"] = s.signals.shared_context;
  j["intent"] = s.ground_truth_intent;
  j["hypotheses"] = std::move(hyps);
  j["ground_truth_index"] = s.ground_truth_index;
  return j.dump();
}

Sample sample_from_json_line(const std::string& line) {
  try {
    auto j = ordered_json::parse(line);
    if (j.at("format_version").get<int>() != kDatasetFormatVersion) {
      throw FormatError("unsupported dataset format version " + j.at("format_version").dump());
    }
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.signals.utterance_tokens = j.at("utterance_tokens").get<std::vector<std::size_t>>();
    s.signals.device_type = j.at("device_type").get<std::size_t>();
    s.signals.shared_context = j.value("shared_context", std::vector<std::size_t>{});
    s.ground_truth_intent = j.at("intent").get<std::string>();
    for (const auto& h : j.at("hypotheses")) {
      s.hypotheses.push_back({h.at("intent").get<std::string>(), h.at("skill").get<std::size_t>(),
                              h.value("interpretation_features", std::vector<std::size_t>{})});
    }
    s.ground_truth_index = j.at("ground_truth_index").get<std::size_t>();
    validate_sample(s);
    return s;
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("malformed dataset record: ") + e.what());
  }
}

void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write dataset " + path.string());
  for (const auto& s : samples) out << sample_to_json_line(s) << '\n';
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset " + path.string());
  std::vector<Sample> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json_line(line));
    } catch (const Error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path) {
  return std::filesystem::path(dataset_path.string() + ".manifest.json");
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a_hex(buf.str());
}

DatasetManifest make_manifest(std::span<const Sample> samples, const std::filesystem::path& path,
                              const DatasetSchema& schema, std::map<std::string, std::string> config,
                              std::uint64_t seed) {
  DatasetManifest m;
  m.path = path.filename().string();
  m.sample_count = samples.size();
  for (const auto& s : samples) ++m.intent_counts[s.ground_truth_intent];
  m.config = std::move(config);
  m.seed = seed;
  m.schema = schema;
  if (std::filesystem::exists(path)) m.content_hash = file_hash(path);
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  ordered_json j;
  j["format"] = "sliceroute-dataset-manifest";
  j["format_version"] = m.format_version;
  j["path"] = m.path;
  j["sample_count"] = m.sample_count;
  j["intent_counts"] = m.intent_counts;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["schema"] = {{"vocab_size", m.schema.vocab_size},
                 {"num_devices", m.schema.num_devices},
                 {"num_context_values", m.schema.num_context_values},
                 {"num_skills", m.schema.num_skills},
                 {"num_interpretation_features", m.schema.num_interpretation_features},
                 {"max_hypotheses", m.schema.max_hypotheses},
                 {"intents", m.schema.intents}};
  j["warnings"] = m.warnings;
  j["content_hash"] = m.content_hash;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open manifest " + path.string());
  try {
    auto j = ordered_json::parse(in);
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kDatasetFormatVersion) {
      throw FormatError("unsupported manifest format version " + std::to_string(m.format_version));
    }
    m.path = j.at("path").get<std::string>();
    m.sample_count = j.at("sample_count").get<std::size_t>();
    m.intent_counts = j.at("intent_counts").get<std::map<std::string, std::size_t>>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("schema");
    m.schema.vocab_size = s.at("vocab_size").get<std::size_t>();
    m.schema.num_devices = s.at("num_devices").get<std::size_t>();
    m.schema.num_context_values = s.at("num_context_values").get<std::size_t>();
    m.schema.num_skills = s.at("num_skills").get<std::size_t>();
    m.schema.num_interpretation_features = s.at("num_interpretation_features").get<std::size_t>();
    m.schema.max_hypotheses = s.at("max_hypotheses").get<std::size_t>();
    m.schema.intents = s.at("intents").get<std::vector<std::string>>();
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    m.content_hash = j.at("content_hash").get<std::string>();
    return m;
  } catch (const ordered_json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace sliceroute::datagen
