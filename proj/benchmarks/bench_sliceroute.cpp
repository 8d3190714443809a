#include <benchmark/benchmark.h>

#include <random>

#include "sliceroute/backbone/backbone.hpp"
#include "sliceroute/datagen/datagen.hpp"
#include "sliceroute/numerics/ops.hpp"
#include "sliceroute/slice_aware/slice_aware.hpp"

using namespace sliceroute;
using num::Tensor;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return Tensor::from({r, c}, std::move(v), grad);
}

struct Fixture {
  datagen::TrafficConfig traffic;
  std::vector<Sample> samples;
  backbone::BackboneParams params;
  std::vector<const Sample*> batch;

  explicit Fixture(std::size_t d) {
    traffic.num_samples = 4000;
    traffic.hypotheses_range = {3, 3};
    samples = datagen::generate(traffic);
    auto cfg = datagen::schema_of(traffic).backbone_config();
    cfg.representation_dim = d;
    params = backbone::BackboneParams::init(cfg, 1);
    for (std::size_t i = 0; i < 256; ++i) batch.push_back(&samples[i]);
  }
};

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(num::matmul(a, b).values().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_BackboneForward(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  auto encoded = backbone::make_batch(f.batch, f.params.config);
  for (auto _ : state) benchmark::DoNotOptimize(backbone::encode_batch(encoded, f.params).values().data());
}
BENCHMARK(BM_BackboneForward)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_BackboneTrainStep(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  auto encoded = backbone::make_batch(f.batch, f.params.config);
  for (auto _ : state) {
    auto loss = backbone::base_loss_batch(backbone::predict_base(backbone::encode_batch(encoded, f.params), f.params),
                                          encoded.ground_truth, 3);
    loss.backward();
  }
}
BENCHMARK(BM_BackboneTrainStep)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_SliceAwareTrainStep(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Fixture f(d);
  std::vector<std::string> tails;
  for (std::size_t i = 1; i < 40; i += 2) tails.push_back(f.params.config.intents[i]);
  slicing::SliceConfig slices(tails);
  auto model = slice_aware::SliceAwareModel::init(f.params, slices, {}, {}, 3);
  auto encoded = backbone::make_batch(f.batch, f.params.config);
  auto frozen = f.params.clone();
  frozen.set_requires_grad(false);
  Tensor x = backbone::encode_batch(encoded, frozen);
  std::vector<slicing::SliceLabelVector> gammas;
  for (auto* s : f.batch) gammas.push_back(slicing::assign_slices(*s, slices));
  for (auto _ : state) {
    auto loss = slice_aware::total_loss_from_representation(x, x, gammas, encoded.ground_truth, 3, model);
    loss.total.backward();
  }
}
BENCHMARK(BM_SliceAwareTrainStep)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
