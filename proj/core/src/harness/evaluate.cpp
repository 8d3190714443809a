#include "sliceroute/harness/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sliceroute/errors.hpp"

namespace sliceroute::harness {

using nlohmann::ordered_json;
using num::Tensor;

Router Router::from_checkpoint(const Checkpoint& checkpoint) {
  Router r = checkpoint.kind == "S" ? with_slices(slice_aware::model_from_checkpoint(checkpoint))
                                    : backbone_only(backbone::params_from_checkpoint(checkpoint));
  if (auto it = checkpoint.config.find("run.model_kind"); it != checkpoint.config.end()) r.kind_ = it->second;
  r.hash_ = sliceroute::parameter_hash(checkpoint);
  return r;
}

Router Router::backbone_only(backbone::BackboneParams params) {
  Router r;
  params.set_requires_grad(false);
  r.backbone_ = std::move(params);
  r.kind_ = "P";
  return r;
}

Router Router::with_slices(slice_aware::SliceAwareModel model) {
  Router r;
  model.backbone.set_requires_grad(false);
  for (auto& t : model.head_params()) t.set_requires_grad(false);
  r.model_ = std::move(model);
  r.kind_ = "S";
  return r;
}

const backbone::BackboneParams& Router::backbone() const { return model_ ? model_->backbone : *backbone_; }

Tensor Router::scores(std::span<const Sample* const> batch) const {
  const auto& params = backbone();
  auto encoded = backbone::make_batch(batch, params.config);
  Tensor x = backbone::encode_batch(encoded, params);
  if (!model_) return backbone::predict_base(x, params);
  return slice_aware::forward_from_representation(x, encoded.num_hypotheses, *model_).scores;
}

Tensor Router::indicators(std::span<const Sample* const> batch) const {
  if (!model_) throw ContractError("indicator scores need a slice-aware model");
  auto encoded = backbone::make_batch(batch, model_->backbone.config);
  Tensor x = backbone::encode_batch(encoded, model_->backbone);
  return slice_aware::indicator_forward(x, encoded.num_hypotheses, model_->indicators);
}

std::optional<double> SliceAccuracy::ra() const {
  if (support == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(support);
}

double EvalReport::overall_ra() const {
  if (test_size == 0) throw ContractError("overall RA of an empty test set");
  return static_cast<double>(correct) / static_cast<double>(test_size);
}

std::optional<double> EvalReport::tail_macro_ra() const {
  double total = 0.0;
  std::size_t defined = 0;
  for (std::size_t i = 1; i < slices.size(); ++i) {
    if (auto ra = slices[i].ra()) {
      total += *ra;
      ++defined;
    }
  }
  if (defined == 0) return std::nullopt;
  return total / static_cast<double>(defined);
}

namespace {

// Batches of same-n samples in dataset order.
std::vector<std::vector<std::size_t>> grouped_batches(std::span<const Sample> samples, std::size_t batch_size) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].num_hypotheses()].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (const auto& [n, members] : groups) {
    for (std::size_t start = 0; start < members.size(); start += batch_size) {
      out.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(start),
                       members.begin() + static_cast<std::ptrdiff_t>(std::min(members.size(), start + batch_size)));
    }
  }
  return out;
}

std::vector<const Sample*> pointers(std::span<const Sample> samples, const std::vector<std::size_t>& idx) {
  std::vector<const Sample*> out;
  for (auto i : idx) out.push_back(&samples[i]);
  return out;
}

std::string pct(double ra) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", ra * 100.0);
  return buf;
}

}  // namespace

EvalReport replication_accuracy(const Router& router, std::span<const Sample> test, const slicing::SliceConfig& slices,
                                const std::string& run_id, const std::string& test_hash, std::size_t batch_size) {
  if (test.empty()) throw InputError("replication accuracy needs a non-empty test set");
  EvalReport report;
  report.run_id = run_id;
  report.model_kind = router.model_kind();
  report.parameter_hash = router.parameter_hash();
  report.test_hash = test_hash;
  report.test_size = test.size();
  for (std::size_t i = 0; i < slices.k(); ++i) report.slices.push_back({slices.slice_name(i), 0, 0, std::nullopt});
  report.predictions.resize(test.size());

  for (const auto& idx : grouped_batches(test, batch_size)) {
    auto ptrs = pointers(test, idx);
    Tensor scores = router.scores(ptrs);
    const std::size_t n = test[idx.front()].num_hypotheses();
    const auto& v = scores.values();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const Sample& s = test[idx[b]];
      auto& p = report.predictions[idx[b]];
      p.id = s.id;
      p.ground_truth = s.ground_truth_index;
      p.predicted = backbone::select_hypothesis(std::span<const double>(v.data() + b * n, n));
      auto gamma = slicing::assign_slices(s, slices);
      for (std::size_t i = 0; i < gamma.k(); ++i) {
        if (gamma.in_slice(i)) p.slices.push_back(i);
      }
    }
  }
  for (const auto& p : report.predictions) {
    report.correct += p.correct() ? 1 : 0;
    for (auto i : p.slices) {
      ++report.slices[i].support;
      report.slices[i].correct += p.correct() ? 1 : 0;
    }
  }
  return report;
}

void attach_train_support(EvalReport& report, const std::map<std::string, std::size_t>& intent_counts) {
  std::size_t total = 0, tails = 0;
  for (const auto& [intent, c] : intent_counts) total += c;
  for (std::size_t i = 1; i < report.slices.size(); ++i) {
    auto it = intent_counts.find(report.slices[i].name);
    const std::size_t c = it == intent_counts.end() ? 0 : it->second;
    report.slices[i].train_support = c;
    tails += c;
  }
  if (!report.slices.empty()) report.slices[0].train_support = total - tails;
}

std::string eval_report_json(const EvalReport& r) {
  ordered_json j;
  j["format"] = "sliceroute-eval-report";
  j["format_version"] = 1;
  j["run_id"] = r.run_id;
  j["model_kind"] = r.model_kind;
  j["parameter_hash"] = r.parameter_hash;
  j["test_hash"] = r.test_hash;
  j["test_size"] = r.test_size;
  j["correct"] = r.correct;
  j["overall_ra"] = r.overall_ra();
  auto tail = r.tail_macro_ra();
  j["tail_macro_ra"] = tail ? ordered_json(*tail) : ordered_json(nullptr);
  auto slices = ordered_json::array();
  for (std::size_t i = 0; i < r.slices.size(); ++i) {
    const auto& s = r.slices[i];
    ordered_json e;
    e["slice"] = i;
    e["name"] = s.name;
    e["support"] = s.support;
    e["correct"] = s.correct;
    auto ra = s.ra();
    e["ra"] = ra ? ordered_json(*ra) : ordered_json("undefined");
    if (s.train_support) e["train_support"] = *s.train_support;
    slices.push_back(std::move(e));
  }
  j["slices"] = std::move(slices);
  auto preds = ordered_json::array();
  for (const auto& p : r.predictions) {
    preds.push_back({{"id", p.id}, {"predicted", p.predicted}, {"ground_truth", p.ground_truth}, {"slices", p.slices}});
  }
  j["predictions"] = std::move(preds);
  return j.dump(2) + "\n";
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << eval_report_json(report);
}

EvalReport read_eval_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open report " + path.string());
  try {
    auto j = ordered_json::parse(in);
    if (j.at("format").get<std::string>() != "sliceroute-eval-report" || j.at("format_version").get<int>() != 1) {
      throw FormatError(path.string() + " is not a version 1 evaluation report");
    }
    EvalReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.model_kind = j.at("model_kind").get<std::string>();
    r.parameter_hash = j.at("parameter_hash").get<std::string>();
    r.test_hash = j.at("test_hash").get<std::string>();
    r.test_size = j.at("test_size").get<std::size_t>();
    r.correct = j.at("correct").get<std::size_t>();
    for (const auto& e : j.at("slices")) {
      SliceAccuracy s{e.at("name").get<std::string>(), e.at("support").get<std::size_t>(),
                      e.at("correct").get<std::size_t>(), std::nullopt};
      if (e.contains("train_support")) s.train_support = e.at("train_support").get<std::size_t>();
      r.slices.push_back(std::move(s));
    }
    for (const auto& e : j.at("predictions")) {
      r.predictions.push_back({e.at("id").get<std::string>(), e.at("predicted").get<std::size_t>(),
                               e.at("ground_truth").get<std::size_t>(),
                               e.at("slices").get<std::vector<std::size_t>>()});
    }
    return r;
  } catch (const ordered_json::exception& e) {
    throw FormatError("malformed report " + path.string() + ": " + e.what());
  }
}

std::string format_eval_report(const EvalReport& r) {
  std::ostringstream os;
  os << "run " << r.run_id << " (" << r.model_kind << "), test size " << r.test_size << "\n";
  os << "overall RA " << pct(r.overall_ra()) << "\n";
  if (auto t = r.tail_macro_ra()) os << "tail macro RA " << pct(*t) << "\n";
  std::size_t width = 5;
  for (const auto& s : r.slices) width = std::max(width, s.name.size());
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %9s %8s\n", static_cast<int>(width), "slice", "support", "RA");
  os << line;
  for (const auto& s : r.slices) {
    auto ra = s.ra();
    std::snprintf(line, sizeof line, "%-*s %9zu %8s\n", static_cast<int>(width), s.name.c_str(), s.support,
                  ra ? pct(*ra).c_str() : "undef");
    os << line;
  }
  return os.str();
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

std::vector<std::optional<double>> indicator_auc(const Router& router, std::span<const Sample> samples,
                                                 std::size_t batch_size) {
  const auto& slices = router.model().slices;
  const std::size_t k = slices.k();
  std::vector<std::vector<double>> scores(k, std::vector<double>(samples.size()));
  for (const auto& idx : grouped_batches(samples, batch_size)) {
    auto ptrs = pointers(samples, idx);
    const auto& v = router.indicators(ptrs).values();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      for (std::size_t i = 0; i < k; ++i) scores[i][idx[b]] = v[b * k + i];
    }
  }
  std::vector<std::optional<double>> out;
  for (std::size_t i = 0; i < k; ++i) {
    auto labels = std::make_unique<bool[]>(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) labels[s] = slicing::assign_slices(samples[s], slices).in_slice(i);
    out.push_back(roc_auc(scores[i], std::span<const bool>(labels.get(), samples.size())));
  }
  return out;
}

}  // namespace sliceroute::harness
