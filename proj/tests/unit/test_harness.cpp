#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "sliceroute/datagen/datagen.hpp"
#include "sliceroute/errors.hpp"
#include "sliceroute/harness/compare.hpp"
#include "sliceroute/harness/config.hpp"
#include "sliceroute/harness/evaluate.hpp"
#include "sliceroute/harness/experiment.hpp"
#include "sliceroute/harness/train.hpp"
#include "support/fixtures.hpp"

using namespace sliceroute;
using namespace sliceroute::harness;

namespace {

// Router whose scores are all 0.5, so it always picks hypothesis 0.
Router first_hypothesis_router() {
  auto params = backbone::BackboneParams::init(testing::tiny_config(4), 1);
  std::fill(params.predictor_weight.mutable_values().begin(), params.predictor_weight.mutable_values().end(), 0.0);
  params.predictor_bias.mutable_values()[0] = 0.0;
  return Router::backbone_only(params);
}

Sample labelled(const std::string& intent, std::size_t truth, std::mt19937_64& rng, const std::string& id) {
  auto s = testing::random_sample(testing::tiny_config(4), 2, rng, id);
  s.ground_truth_index = truth;
  s.hypotheses[truth].intent = intent;
  s.ground_truth_intent = intent;
  return s;
}

SliceAccuracy slice(const std::string& name, std::size_t support, std::size_t correct) {
  SliceAccuracy s;
  s.name = name;
  s.support = support;
  s.correct = correct;
  return s;
}

EvalReport report(const std::string& run, std::size_t correct, std::size_t tail_correct) {
  EvalReport r;
  r.run_id = run;
  r.model_kind = "P";
  r.test_hash = "abc";
  r.test_size = 10000;
  r.correct = correct;
  r.slices = {slice("base", 9000, correct - tail_correct), slice("T", 1000, tail_correct)};
  return r;
}

struct SmallSetup {
  ExperimentConfig config;
  TrainingData data;
};

SmallSetup small_setup(std::size_t epochs) {
  datagen::TrafficConfig traffic;
  traffic.num_samples = 600;
  traffic.num_intents = 8;
  traffic.vocab_size = 60;
  traffic.num_skills = 20;
  traffic.hypotheses_range = {2, 3};
  SmallSetup s;
  s.config.epochs = epochs;
  s.config.batch_size = 64;
  s.config.representation_dim = 8;
  s.config.token_dim = 4;
  s.config.encoder_hidden = 4;
  s.config.feature_dim = 4;
  s.config.slices = slicing::SliceConfig({datagen::intent_names(8)[3], datagen::intent_names(8)[5]});
  s.config.selection = CheckpointSelection::FinalEpoch;
  s.data = prepare_training_data(s.config, datagen::generate(traffic), {}, datagen::schema_of(traffic));
  return s;
}

}  // namespace

TEST_CASE("key=value parsing") {
  auto kv = parse_key_values("# comment\n a = 1 \n\nb=x y\n");
  CHECK(kv.size() == 2);
  CHECK(kv["a"] == "1");
  CHECK(kv["b"] == "x y");
  CHECK_THROWS_AS(parse_key_values("novalue\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("=3\n"), ConfigError);
}

TEST_CASE("experiment config defaults, echo and errors") {
  auto cfg = parse_experiment_config({});
  CHECK(cfg.epochs == 10);
  CHECK(cfg.batch_size == 256);
  CHECK(cfg.lr == 1e-3);
  CHECK(cfg.representation_dim == 128);
  CHECK(cfg.model_kind == ModelKind::P);
  CHECK(cfg.slice_options.augment_sigma == 0.005);
  CHECK(cfg.slice_options.freeze_backbone);

  auto parsed = parse_experiment_config({{"run.model_kind", "S_UP"},
                                         {"slices.monitored", "Get News|Play Game"},
                                         {"attention.method", "indicator_plus_expert"},
                                         {"attention.tau", "0.1"},
                                         {"model.backbone_checkpoint", "p.json"},
                                         {"train.selection", "final_epoch"}},
                                        "/data");
  CHECK(parsed.model_kind == ModelKind::S_UP);
  CHECK(parsed.slices.monitored_intents == std::vector<std::string>{"Get News", "Play Game"});
  CHECK(parsed.tau == 0.1);
  CHECK(parsed.backbone_checkpoint == std::filesystem::path("/data/p.json"));
  CHECK(parsed.selection == CheckpointSelection::FinalEpoch);
  auto again = parse_experiment_config(parsed.echo());
  CHECK(again.echo() == parsed.echo());

  CHECK_THROWS_AS(parse_experiment_config({{"train.epoch", "3"}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"train.epochs", "three"}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"run.model_kind", "Q"}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config({{"run.model_kind", "S"}}).validate(), ConfigError);
  CHECK_THROWS_AS(parse_traffic_config({{"traffic.bogus", "1"}}), ConfigError);
  CHECK(parse_traffic_config({{"traffic.num_samples", "77"}}).num_samples == 77);
}

TEST_CASE("replication accuracy examples") {
  auto router = first_hypothesis_router();
  std::mt19937_64 rng(1);
  const slicing::SliceConfig slices({"B"});

  SUBCASE("three of four") {
    std::vector<Sample> test{labelled("A", 0, rng, "a"), labelled("A", 0, rng, "b"), labelled("C", 0, rng, "c"),
                             labelled("A", 1, rng, "d")};
    auto r = replication_accuracy(router, test, slices, "run", "h");
    CHECK(r.overall_ra() == 0.75);
    CHECK_FALSE(r.slices[1].ra().has_value());
    CHECK(r.slices[1].support == 0);
    CHECK_FALSE(r.tail_macro_ra().has_value());
  }
  SUBCASE("hand-counted slices") {
    std::vector<Sample> test{labelled("A", 0, rng, "a"), labelled("C", 1, rng, "b"), labelled("B", 0, rng, "c"),
                             labelled("B", 1, rng, "d")};
    auto r = replication_accuracy(router, test, slices, "run", "h");
    CHECK(r.overall_ra() == 0.5);
    CHECK(*r.slices[0].ra() == 0.5);
    CHECK(*r.slices[1].ra() == 0.5);
    CHECK(r.slices[0].support == 2);
    CHECK(r.predictions.size() == 4);
  }
  SUBCASE("perfect model") {
    std::vector<Sample> test;
    for (int i = 0; i < 9; ++i) test.push_back(labelled(i % 2 ? "B" : "D", 0, rng, std::to_string(i)));
    auto r = replication_accuracy(router, test, slices, "run", "h");
    CHECK(r.overall_ra() == 1.0);
    for (const auto& s : r.slices) CHECK(s.ra() == 1.0);
  }
  CHECK_THROWS(replication_accuracy(router, std::span<const Sample>{}, slices, "run", "h"));
}

TEST_CASE("overall RA is the support-weighted mean of slice RAs") {
  auto router = first_hypothesis_router();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> coin(0, 1), which(0, 3);
  const char* names[] = {"A", "B", "C", "D"};
  std::vector<Sample> test;
  for (int i = 0; i < 300; ++i) test.push_back(labelled(names[which(rng)], coin(rng), rng, std::to_string(i)));
  auto r = replication_accuracy(router, test, slicing::SliceConfig({"B", "D"}), "run", "h");
  double weighted = 0.0;
  for (const auto& s : r.slices)
    if (s.support) weighted += *s.ra() * static_cast<double>(s.support);
  CHECK(weighted / static_cast<double>(r.test_size) == doctest::Approx(r.overall_ra()).epsilon(1e-12));
}

TEST_CASE("eval report JSON round trip") {
  auto router = first_hypothesis_router();
  std::mt19937_64 rng(3);
  std::vector<Sample> test{labelled("A", 0, rng, "a"), labelled("B", 1, rng, "b")};
  auto r = replication_accuracy(router, test, slicing::SliceConfig({"B", "C"}), "run", "h");
  attach_train_support(r, {{"A", 30}, {"B", 5}});
  const auto path = std::filesystem::temp_directory_path() / "sliceroute_test_report.json";
  write_eval_report(r, path);
  auto back = read_eval_report(path);
  CHECK(eval_report_json(back) == eval_report_json(r));
  CHECK(back.slices[0].train_support == 30u);
  CHECK(back.slices[1].train_support == 5u);
  CHECK(back.slices[2].train_support == 0u);
  CHECK_FALSE(back.slices[2].ra().has_value());
  std::filesystem::remove(path);
}

TEST_CASE("compare examples") {
  const EvalReport base = report("P", 9900, 900);
  const EvalReport better = report("S", 9910, 905);
  const EvalReport reports[] = {base, better};

  auto self = compare(std::span(&base, 1), "P");
  CHECK(self.rows[0].overall_delta == 0.0);
  CHECK(*self.rows[0].tail_macro_delta == 0.0);
  CHECK(format_points(self.rows[0].overall_delta) == "0.00");

  auto c = compare(reports, "P");
  CHECK(format_points(c.rows[1].overall_delta) == "+0.10");
  CHECK(format_points(*c.rows[1].slice_delta[1]) == "+0.50");
  CHECK(c.rows[1].improved_tails == 1);

  auto reverse = compare(reports, "S");
  for (std::size_t i = 0; i < c.slice_names.size(); ++i)
    CHECK(*reverse.rows[0].slice_delta[i] == doctest::Approx(-*c.rows[1].slice_delta[i]).epsilon(1e-12));
  CHECK(reverse.rows[0].overall_delta == doctest::Approx(-c.rows[1].overall_delta).epsilon(1e-12));
  CHECK(reverse.rows[0].degraded_tails == 1);

  auto other = better;
  other.test_hash = "def";
  const EvalReport mixed[] = {base, other};
  CHECK_THROWS_AS(compare(mixed, "P"), InputError);
  CHECK_THROWS_AS(compare(reports, "missing"), InputError);

  auto csv = comparison_csv(c);
  CHECK(csv.rfind("run,model_kind,slice,band,volume,test_support,ra_pct,delta_pts\n", 0) == 0);
  std::istringstream lines(csv);
  std::size_t rows = 0;
  for (std::string line; std::getline(lines, line); ++rows) {
    CAPTURE(line);
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
  }
  CHECK(rows == 1 + c.rows.size() * (2 + c.slice_names.size()));
  CHECK(format_comparison(c).find("S") != std::string::npos);
}

TEST_CASE("volume bands") {
  CHECK(volume_band(10001) == VolumeBand::Over10K);
  CHECK(volume_band(10000) == VolumeBand::Between1KAnd10K);
  CHECK(volume_band(1000) == VolumeBand::Between1KAnd10K);
  CHECK(volume_band(999) == VolumeBand::Below1K);
  CHECK(format_points(-0.004) == "0.00");
  CHECK(format_points(-1.236) == "-1.24");
}

TEST_CASE("roc_auc agrees with a pairwise count") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> bucket(0, 9), coin(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + trial;
    std::vector<double> scores(n);
    auto labels = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = bucket(rng) / 10.0;
      labels[i] = coin(rng) == 0;
    }
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (labels[i] && !labels[j]) {
          pairs += 1.0;
          wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    auto auc = roc_auc(scores, std::span<const bool>(labels.get(), n));
    if (pairs == 0.0) CHECK_FALSE(auc.has_value());
    else CHECK(*auc == doctest::Approx(wins / pairs).epsilon(1e-12));
  }
}

TEST_CASE("batch plans group by hypothesis count and cover every sample once") {
  auto setup = small_setup(0);
  std::mt19937_64 rng(5);
  auto plan = batch_plan(setup.data.train, 64, rng);
  std::vector<int> seen(setup.data.train.size(), 0);
  for (const auto& batch : plan) {
    CHECK(batch.size() <= 64);
    for (auto i : batch) {
      ++seen[i];
      CHECK(setup.data.train[i].num_hypotheses() == setup.data.train[batch[0]].num_hypotheses());
    }
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("training with zero epochs keeps the initialization") {
  auto setup = small_setup(0);
  auto a = train_backbone(setup.config, setup.data);
  CHECK(a.report.epochs.empty());
  CHECK(a.report.selected_epoch == 0);
  auto b = train_backbone(setup.config, setup.data);
  CHECK(a.report.parameter_hash == b.report.parameter_hash);
  setup.config.epochs = 1;
  CHECK(train_backbone(setup.config, setup.data).report.parameter_hash != a.report.parameter_hash);
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto setup = small_setup(2);
  setup.config.model_kind = ModelKind::S;
  setup.config.slice_options.max_hypotheses = 3;
  auto p1 = train_backbone(setup.config, setup.data);
  auto p2 = train_backbone(setup.config, setup.data);
  CHECK(p1.report.parameter_hash == p2.report.parameter_hash);
  CHECK(p1.report.epochs.back().validation_loss == p2.report.epochs.back().validation_loss);

  auto backbone = backbone::params_from_checkpoint(p1.checkpoint);
  auto s1 = train_slice_aware(setup.config, setup.data, backbone);
  auto s2 = train_slice_aware(setup.config, setup.data, backbone);
  CHECK(s1.report.parameter_hash == s2.report.parameter_hash);
  CHECK(s1.report.epochs.back().validation_loss == s2.report.epochs.back().validation_loss);

  auto other = setup.config;
  other.seed = 2;
  CHECK(train_backbone(other, setup.data).report.parameter_hash != p1.report.parameter_hash);
}

TEST_CASE("best-validation selection never ends worse than the initial model") {
  auto setup = small_setup(2);
  setup.config.selection = CheckpointSelection::BestValidation;
  auto r = train_backbone(setup.config, setup.data).report;
  double best = r.initial_validation_loss;
  for (const auto& e : r.epochs) best = std::min(best, e.validation_loss);
  const double chosen = r.selected_epoch == 0 ? r.initial_validation_loss : r.epochs[r.selected_epoch - 1].validation_loss;
  CHECK(chosen == best);
}

TEST_CASE("upsampled training data only grows the tail intents") {
  datagen::TrafficConfig traffic;
  traffic.num_samples = 800;
  traffic.num_intents = 8;
  const auto raw = datagen::generate(traffic);
  ExperimentConfig cfg;
  cfg.slices = slicing::SliceConfig({datagen::intent_names(8)[3], datagen::intent_names(8)[5]});
  auto plain = prepare_training_data(cfg, raw, {}, datagen::schema_of(traffic));
  cfg.model_kind = ModelKind::P_UP;
  auto up = prepare_training_data(cfg, raw, {}, datagen::schema_of(traffic));
  CHECK(up.validation == plain.validation);
  auto up_counts = intent_counts(up.train);
  for (const auto& [intent, n] : intent_counts(plain.train)) {
    const auto& tails = cfg.slices.monitored_intents;
    const bool tail = std::find(tails.begin(), tails.end(), intent) != tails.end();
    CHECK(up_counts[intent] == (tail ? 3 * n : n));
  }
}
