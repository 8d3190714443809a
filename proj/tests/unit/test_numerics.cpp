#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "sliceroute/errors.hpp"
#include "sliceroute/numerics/adam.hpp"
#include "sliceroute/numerics/lstm.hpp"
#include "sliceroute/numerics/ops.hpp"
#include "support/gradcheck.hpp"

using namespace sliceroute;
using namespace sliceroute::num;
using sliceroute::testing::gradcheck;
using sliceroute::testing::random_tensor;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("matmul examples") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(vals(matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});
  CHECK(vals(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}))) == std::vector<double>{11});
  auto diag = Tensor::from({2, 2}, {1, 0, 0, 2});
  CHECK(vals(matmul(diag, Tensor::from({2, 2}, {5, 6, 7, 8}))) == std::vector<double>{5, 6, 14, 16});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("elementwise examples") {
  CHECK(vals(abs(Tensor::from({3}, {-1, 0, 2}))) == std::vector<double>{1, 0, 2});
  auto s = scale(Tensor::from({2}, {0.1, 0.2}), 10.0);
  CHECK(s.at(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.at(1) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(vals(add(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}))) == std::vector<double>{4, 6});
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  CHECK_THROWS_AS(mul(Tensor::zeros({2, 1}), Tensor::zeros({1, 2})), DimensionError);
}

TEST_CASE("abs backward uses sign with sign(0) = 0") {
  auto w = Tensor::from({3}, {-2, 0, 3}, true);
  sum(abs(w)).backward();
  CHECK(vals(Tensor::from({3}, {w.grad()[0], w.grad()[1], w.grad()[2]})) == std::vector<double>{-1, 0, 1});
}

TEST_CASE("sigmoid examples") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(std::fabs(sigmoid(Tensor::scalar(50.0)).item() - 1.0) <= 1e-15);
  const double oracle = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(sigmoid(Tensor::scalar(1.0)).item() == doctest::Approx(oracle).epsilon(1e-15));
  CHECK(oracle == doctest::Approx(0.7310585786).epsilon(1e-10));
  auto big = sigmoid(Tensor::from({2}, {-800.0, 800.0}));
  CHECK(std::isfinite(big.at(0)));
  CHECK(big.at(1) == 1.0);
}

TEST_CASE("softmax_temp examples") {
  auto u = softmax_temp(Tensor::from({3}, {2.5, 2.5, 2.5}), 0.7);
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(softmax_temp(Tensor::from({1}, {-123.0}), 0.3).item() == 1.0);
  auto a = softmax_temp(Tensor::from({2}, {0.0, std::log(2.0)}), 1.0);
  CHECK(a.at(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(a.at(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  auto sharp = softmax_temp(Tensor::from({2}, {0.0, std::log(2.0)}), 0.1);
  // closed form: 2^10 / (1 + 2^10)
  CHECK(sharp.at(1) == doctest::Approx(1024.0 / 1025.0).epsilon(1e-14));
  CHECK(sharp.at(1) > 0.999);
  CHECK_THROWS_AS(softmax_temp(Tensor::from({2}, {1, 2}), 0.0), ParameterError);
  CHECK_THROWS_AS(softmax_temp(Tensor::from({2}, {1, 2}), -1.0), ParameterError);
}

TEST_CASE("softmax_temp survives large logits at small temperature") {
  auto a = softmax_temp(Tensor::from({3}, {1000.0, 999.0, -1000.0}), 0.1);
  double total = 0.0;
  for (double v : a.values()) {
    CHECK(std::isfinite(v));
    total += v;
  }
  CHECK(std::fabs(total - 1.0) < 1e-12);
}

TEST_CASE("softmax_temp row lengths zero the padding") {
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  std::vector<std::size_t> lens{2, 3};
  auto y = softmax_temp(x, 1.0, lens);
  CHECK(y.at(0, 2) == 0.0);
  CHECK(y.at(0, 0) + y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(y.at(1, 0) + y.at(1, 1) + y.at(1, 2) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("softmax_temp is a shift-invariant probability vector") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> logit(-20.0, 20.0);
  std::uniform_int_distribution<int> len(1, 12);
  std::uniform_real_distribution<double> temp(0.05, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = static_cast<std::size_t>(len(rng));
    std::vector<double> v(k);
    for (auto& x : v) x = logit(rng);
    const double tau = temp(rng), shift = logit(rng);
    auto a = softmax_temp(Tensor::from({k}, v), tau);
    std::vector<double> shifted(v);
    for (auto& x : shifted) x += shift;
    auto b = softmax_temp(Tensor::from({k}, shifted), tau);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(a.at(i) >= 0.0);
      CHECK(std::fabs(a.at(i) - b.at(i)) <= 1e-12);
      total += a.at(i);
    }
    CHECK(std::fabs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("bce_loss examples") {
  CHECK(bce_loss(Tensor::scalar(0.5), Tensor::scalar(1.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_loss(Tensor::from({2}, {0.5, 0.5}), Tensor::from({2}, {0, 1})).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double limit = -std::log(1.0 - kBceEpsilon);
  CHECK(bce_loss(Tensor::from({3}, {1.0, 0.0, 1.0}), Tensor::from({3}, {1, 0, 1})).item() <= limit * (1 + 1e-12));
  CHECK_THROWS_AS(bce_loss(Tensor::scalar(0.5), Tensor::scalar(1.5)), DomainError);
  CHECK_THROWS_AS(bce_loss(Tensor::scalar(0.5), Tensor::scalar(-0.1)), DomainError);
  CHECK_THROWS_AS(bce_loss(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("bce_loss is nonnegative") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  std::bernoulli_distribution t(0.5);
  for (int i = 0; i < 500; ++i) {
    auto loss = bce_loss(Tensor::scalar(p(rng)), Tensor::scalar(t(rng) ? 1.0 : 0.0)).item();
    CHECK(loss >= 0.0);
  }
}

TEST_CASE("backward examples") {
  auto w = Tensor::from({3}, {0.3, -1.0, 2.0}, true);
  auto loss = sum(w);
  loss.backward();
  CHECK(vals(Tensor::from({3}, {w.grad().begin(), w.grad().end()})) == std::vector<double>{1, 1, 1});
  loss.backward();
  CHECK(vals(Tensor::from({3}, {w.grad().begin(), w.grad().end()})) == std::vector<double>{2, 2, 2});
  CHECK_THROWS_AS(abs(w).backward(), ContractError);
}

TEST_CASE("backward through bce(sigmoid(w.x)) matches finite differences") {
  std::mt19937_64 rng(3);
  auto w = random_tensor({1, 4}, rng);
  auto x = random_tensor({4, 1}, rng, -1, 1, false);
  auto res = gradcheck([&] { return bce_loss(sigmoid(matmul(w, x)), Tensor::from({1, 1}, {1.0})); }, {w});
  CHECK(res.max_relative_error < 1e-4);
}

TEST_CASE("gradient reset zeroes the buffer") {
  auto w = Tensor::from({2}, {1, 2}, true);
  sum(mul(w, w)).backward();
  CHECK(w.grad()[1] == 4.0);
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0);
  CHECK(w.grad()[1] == 0.0);
  auto fresh = Tensor::zeros({4, 5}, true);
  CHECK(fresh.grad().size() == 20);
  for (double g : fresh.grad()) CHECK(g == 0.0);
}

TEST_CASE("computation record visits every node once, operands first") {
  std::mt19937_64 rng(1);
  auto w = random_tensor({3, 3}, rng);
  auto x = random_tensor({2, 3}, rng);
  auto h = tanh(matmul(x, w));
  auto loss = sum(add(h, mul(h, h)));  // h reused
  auto record = ComputationRecord::trace(loss);
  std::set<Node*> seen;
  for (std::size_t i = 0; i < record.order().size(); ++i) {
    Node* n = record.order()[i];
    CHECK(seen.insert(n).second);
    for (auto& op : n->operands) {
      if (op->requires_grad) CHECK(seen.count(op.get()) == 1);
    }
  }
  CHECK(record.order().back() == loss.node());
}

TEST_CASE("adam examples") {
  SUBCASE("first step moves each element by about lr") {
    auto p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
    std::vector<double> g{0.3, -4.0, 1e-3};
    std::copy(g.begin(), g.end(), p.mutable_grad().begin());
    AdamState state;
    std::vector<Tensor> params{p};
    adam_step(params, state);
    const double lr = 1e-3;
    std::vector<double> start{1.0, -2.0, 0.5};
    for (std::size_t i = 0; i < 3; ++i) {
      // hand-computed: mhat = g, vhat = g^2 after bias correction
      const double expected = lr * std::fabs(g[i]) / (std::fabs(g[i]) + 1e-8);
      CHECK(std::fabs(p.at(i) - start[i]) == doctest::Approx(expected).epsilon(1e-9));
      CHECK(std::fabs(p.at(i) - start[i]) == doctest::Approx(lr).epsilon(1e-4));
    }
    CHECK(state.t == 1);
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto p = Tensor::from({2}, {0.25, -0.75}, true);
    AdamState state;
    std::vector<Tensor> params{p};
    adam_step(params, state);
    CHECK(p.at(0) == 0.25);
    CHECK(p.at(1) == -0.75);
  }
  SUBCASE("two identical steps") {
    auto p = Tensor::from({1}, {0.0}, true);
    p.mutable_grad()[0] = 2.0;
    AdamState state;
    std::vector<Tensor> params{p};
    adam_step(params, state);
    const double after_one = p.at(0);
    adam_step(params, state);
    CHECK(state.t == 2);
    // m2/c1 = g and v2/c2 = g^2 for a constant gradient
    CHECK(std::fabs(p.at(0) - after_one) == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK(p.grad()[0] == 2.0);
  }
  SUBCASE("moment shape mismatch is a state error") {
    AdamState state;
    std::vector<Tensor> params{Tensor::zeros({2}, true)};
    adam_step(params, state);
    std::vector<Tensor> other{Tensor::zeros({3}, true)};
    CHECK_THROWS_AS(adam_step(other, state), StateError);
    std::vector<Tensor> two{Tensor::zeros({2}, true), Tensor::zeros({2}, true)};
    CHECK_THROWS_AS(adam_step(two, state), StateError);
  }
}

TEST_CASE("recurrent_encode examples") {
  std::mt19937_64 rng(9);
  SUBCASE("single step equals one cell application per direction") {
    BiLstm net{LstmCell::create(3, 4, rng), LstmCell::create(3, 4, rng)};
    auto x = random_tensor({1, 3}, rng, -1, 1, false);
    auto out = recurrent_encode(x, net);
    REQUIRE(out.shape() == Shape{1, 8});
    LstmState zero{Tensor::zeros({1, 4}), Tensor::zeros({1, 4})};
    auto f = lstm_step(net.forward, x, zero).hidden;
    auto b = lstm_step(net.backward, x, zero).hidden;
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(out.at(0, i) == f.at(i));
      CHECK(out.at(0, 4 + i) == b.at(i));
    }
  }
  SUBCASE("zero parameters give zero output") {
    BiLstm net{LstmCell::zeros(3, 2), LstmCell::zeros(3, 2)};
    auto out = recurrent_encode(random_tensor({5, 3}, rng), net);
    for (double v : out.values()) CHECK(v == 0.0);
  }
  SUBCASE("gradients of sum(output) match finite differences") {
    BiLstm net{LstmCell::create(3, 2, rng), LstmCell::create(3, 2, rng)};
    auto x = random_tensor({3, 3}, rng);
    std::vector<Tensor> params{net.forward.input_weights, net.forward.hidden_weights, net.forward.bias,
                               net.backward.input_weights, net.backward.hidden_weights, net.backward.bias, x};
    auto res = gradcheck([&] { return sum(recurrent_encode(x, net)); }, params);
    CHECK(res.max_relative_error < 1e-4);
  }
  SUBCASE("empty sequence is an input error") {
    BiLstm net{LstmCell::zeros(3, 2), LstmCell::zeros(3, 2)};
    CHECK_THROWS_AS(recurrent_encode(Tensor::zeros({0, 3}), net), InputError);
  }
}

TEST_CASE("padded batch matches per-sequence encoding") {
  std::mt19937_64 rng(21);
  BiLstm net{LstmCell::create(2, 3, rng), LstmCell::create(2, 3, rng)};
  auto a = random_tensor({4, 2}, rng, -1, 1, false);
  auto b = random_tensor({2, 2}, rng, -1, 1, false);
  std::vector<Tensor> steps;
  for (std::size_t t = 0; t < 4; ++t) {
    std::vector<double> row(a.values().begin() + t * 2, a.values().begin() + t * 2 + 2);
    if (t < 2) row.insert(row.end(), b.values().begin() + t * 2, b.values().begin() + t * 2 + 2);
    else row.insert(row.end(), {9.0, -9.0});  // padding garbage
    steps.push_back(Tensor::from({2, 2}, row));
  }
  std::vector<std::size_t> lens{4, 2};
  auto batched = bilstm_encode(net, steps, lens);
  auto ea = recurrent_encode(a, net);
  auto eb = recurrent_encode(b, net);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 6; ++c) {
      CHECK(batched[t].at(0, c) == doctest::Approx(ea.at(t, c)).epsilon(1e-14));
      if (t < 2) CHECK(batched[t].at(1, c) == doctest::Approx(eb.at(t, c)).epsilon(1e-14));
    }
}

TEST_CASE("every differentiable op matches finite differences on random shapes") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = dim(rng), p = dim(rng), q = dim(rng), n = dim(rng);
    auto a = random_tensor({m, p}, rng);
    auto b = random_tensor({p, q}, rng);
    auto c = random_tensor({m, p}, rng);
    auto bias = random_tensor({p}, rng);
    auto qbias = random_tensor({q}, rng);
    auto mixer = random_tensor({m * n, q * p}, rng);
    auto weights = random_tensor({m, q}, rng);
    auto table = random_tensor({5, p}, rng);
    std::vector<std::vector<std::size_t>> ids;
    for (std::size_t r = 0; r < m; ++r) ids.push_back({r % 5, (r * 3 + 1) % 5});
    auto target = random_tensor({m, q}, rng, 0.0, 1.0, false);
    std::vector<double> tw(m * q);
    for (auto& w : tw) w = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    // a weighted sum keeps every output element in play
    auto probe = [&](const Tensor& t) {
      auto w = Tensor::from(t.shape(), [&] {
        std::vector<double> v(t.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(1.0 + static_cast<double>(i));
        return v;
      }());
      return sum(mul(t, w));
    };
    std::vector<std::function<Tensor()>> cases{
        [&] { return probe(matmul(a, b)); },
        [&] { return probe(add(a, c)); },
        [&] { return probe(sub(a, c)); },
        [&] { return probe(mul(a, c)); },
        [&] { return probe(abs(a)); },
        [&] { return probe(scale(a, -2.5)); },
        [&] { return probe(sigmoid(a)); },
        [&] { return probe(tanh(a)); },
        [&] { return probe(add_bias(a, bias)); },
        [&] { return probe(linear(c, b, qbias)); },
        [&] { return probe(softmax_temp(a, 0.7)); },
        [&] { return probe(softmax_temp(reshape(a, {m * p}), 1.3)); },
        [&] { return weighted_bce(sigmoid(matmul(a, b)), target.values(), tw); },
        [&] { return bce_loss(sigmoid(matmul(a, b)), target); },
        [&] { return probe(concat_cols({a, c, tanh(a)})); },
        [&] { return probe(concat_rows({a, c})); },
        [&] { return probe(slice_cols(a, p - 1, 1)); },
        [&] { return probe(repeat_rows(a, n)); },
        [&] { return probe(segment_mean(repeat_rows(tanh(a), n), n)); },
        [&] { return probe(transpose_blocks(concat_rows({a, c}), m)); },
        [&] { return probe(mix_blocks(mixer, weights, n)); },
        [&] { return probe(embedding_bag(table, ids)); },
        [&] { return mean(mul(a, a)); },
    };
    for (auto& f : cases) {
      auto res = gradcheck(f, {a, b, c, bias, qbias, mixer, weights, table});
      worst = std::max(worst, res.max_relative_error);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("operations are bitwise deterministic") {
  auto run = [] {
    std::mt19937_64 rng(77);
    BiLstm net{LstmCell::create(3, 4, rng), LstmCell::create(3, 4, rng)};
    auto x = random_tensor({6, 3}, rng);
    auto out = recurrent_encode(x, net);
    auto loss = bce_loss(sigmoid(out), Tensor::full(out.shape(), 1.0));
    loss.backward();
    std::vector<double> bits(out.values().begin(), out.values().end());
    bits.push_back(loss.item());
    bits.insert(bits.end(), net.forward.input_weights.grad().begin(), net.forward.input_weights.grad().end());
    return bits;
  };
  auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("linear equals add_bias of matmul bitwise") {
  std::mt19937_64 rng(31);
  auto x = random_tensor({7, 5}, rng);
  auto w = random_tensor({5, 3}, rng);
  auto bias = random_tensor({3}, rng);
  const auto fused = linear(x, w, bias);
  const auto split = add_bias(matmul(x, w), bias);
  CHECK(std::equal(fused.values().begin(), fused.values().end(), split.values().begin()));
  CHECK_THROWS_AS(linear(x, w, random_tensor({4}, rng)), DimensionError);
  CHECK_THROWS_AS(linear(x, random_tensor({4, 3}, rng), bias), DimensionError);
}
