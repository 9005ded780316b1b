#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fragnet/fen.hpp"
#include "fragnet/network.hpp"
#include "fragnet/trainer.hpp"

using namespace fragnet;

namespace {

Tensor random_batch(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = d(rng);
  return Tensor(std::move(shape), std::move(v));
}

bool same_values(const Tensor& a, const Tensor& b, float tol = 0.0f) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

}  // namespace

TEST_CASE("full-size extractor layer shapes") {
  const FenConfig cfg = FenConfig::full();
  std::mt19937_64 rng(1);
  auto params = FenParams<float>::init(cfg, rng);
  std::vector<Shape> trace;
  const Tensor out = fen_forward(cfg, params, Tensor::zeros({2, 96, 96, 3}), Mode::Train, &trace);
  CHECK(out.shape() == Shape{2, 512});
  // The trace holds per-example shapes.
  const std::vector<Shape> expected{{96, 96, 3},  {96, 96, 32}, {48, 48, 32}, {48, 48, 64},
                                    {24, 24, 64}, {24, 24, 128}, {12, 12, 128}, {12, 12, 256},
                                    {6, 6, 256},  {6, 6, 512},  {3, 3, 512},  {512}};
  CHECK(trace == expected);
  const auto table = fen_layer_table(cfg);
  REQUIRE(table.size() == expected.size());
  for (std::size_t i = 0; i < table.size(); ++i) CHECK(table[i].shape == expected[i]);
}

TEST_CASE("full-size extractor parameter counts") {
  const FenConfig cfg = FenConfig::full();
  CHECK(cfg.flattened_dim() == 4608);
  const auto table = fen_layer_table(cfg);
  CHECK(table.back().parameters == 2359296 + 4 * 512);
  const std::size_t total = std::accumulate(table.begin(), table.end(), std::size_t{0},
                                            [](std::size_t s, const LayerSummary& r) { return s + r.parameters; });
  CHECK(total == 3932896);
  CHECK(std::abs(double(total) - 4.0e6) / 4.0e6 < 0.05);
  std::mt19937_64 rng(2);
  auto params = FenParams<float>::init(cfg, rng);
  CHECK(params.fc_weight.numel() == 2359296);
  std::size_t counted = params.fc_weight.numel() + 4 * params.fc_gamma.numel();
  for (const auto& b : params.blocks) counted += b.weight.numel() + 4 * b.gamma.numel();
  CHECK(counted == total);
}

TEST_CASE("desk extractor maps 32x32 fragments to 64 features") {
  const FenConfig cfg = FenConfig::desk();
  CHECK(cfg.final_side() == 4);
  CHECK(cfg.flattened_dim() == 512);
  std::mt19937_64 rng(3);
  auto params = FenParams<float>::init(cfg, rng);
  CHECK(fen_forward(cfg, params, random_batch({3, 32, 32, 3}, 1), Mode::Train).shape() == Shape{3, 64});
  CHECK(fen_forward(cfg, params, random_batch({32, 32, 3}, 1), Mode::Infer).shape() == Shape{64});
  CHECK_THROWS_AS(fen_forward(cfg, params, random_batch({2, 30, 30, 3}, 1), Mode::Train), ContractError);
}

TEST_CASE("features are not rectified after the final batchnorm") {
  const FenConfig cfg = FenConfig::desk();
  std::mt19937_64 rng(4);
  auto params = FenParams<float>::init(cfg, rng);
  const Tensor out = fen_forward(cfg, params, random_batch({6, 32, 32, 3}, 2), Mode::Train);
  const auto v = out.values();
  CHECK(std::any_of(v.begin(), v.end(), [](float x) { return x < -0.1f; }));
  // Per-feature batch mean is beta = 0.
  for (std::size_t d = 0; d < 64; ++d) {
    double mean = 0.0;
    for (std::size_t n = 0; n < 6; ++n) mean += out[n * 64 + d];
    CHECK(std::abs(mean / 6) < 1e-4);
  }
}

TEST_CASE("both branches share one set of weights") {
  const FenConfig cfg = FenConfig::desk();
  std::mt19937_64 rng(5);
  auto params = FenParams<float>::init(cfg, rng);
  const Tensor a = random_batch({3, 32, 32, 3}, 10), b = random_batch({3, 32, 32, 3}, 11);

  SUBCASE("inference: each branch equals a standalone pass") {
    const auto [fa, fb] = fen_shared_apply(cfg, params, a, b, Mode::Infer);
    CHECK(same_values(fa, fen_forward(cfg, params, a, Mode::Infer), 1e-6f));
    CHECK(same_values(fb, fen_forward(cfg, params, b, Mode::Infer), 1e-6f));
  }
  SUBCASE("identical inputs give identical features") {
    const auto [fa, fb] = fen_shared_apply(cfg, params, a, a, Mode::Train);
    CHECK(same_values(fa, fb));
  }
  SUBCASE("training uses one batchnorm batch of 2N") {
    std::mt19937_64 same_seed(5);
    auto copy = FenParams<float>::init(cfg, same_seed);
    const auto [fa, fb] = fen_shared_apply(cfg, params, a, b, Mode::Train);
    const Tensor joint = fen_forward(cfg, copy, concat_batch(a, b), Mode::Train);
    CHECK(same_values(fa, slice_batch(joint, 0, 3), 1e-5f));
    CHECK(same_values(fb, slice_batch(joint, 3, 6), 1e-5f));
  }
  SUBCASE("a loss on the second branch alone reaches every conv weight") {
    const auto [fa, fb] = fen_shared_apply(cfg, params, a, b, Mode::Train);
    sum(square(fb)).backward();
    for (const auto& block : params.blocks) {
      const auto g = block.weight.grad();
      REQUIRE(g.size() == block.weight.numel());
      CHECK(std::any_of(g.begin(), g.end(), [](float x) { return x != 0.0f; }));
    }
  }
}

TEST_CASE("one SGD step moves the shared extractor used by both branches") {
  TrainingState state(ModelConfig::desk(FusionKind::Kronecker), 6);
  auto& net = state.network;
  const Tensor a = random_batch({4, 32, 32, 3}, 20), b = random_batch({4, 32, 32, 3}, 21);
  const std::vector<float> before(net.fen().blocks[0].weight.values().begin(),
                                  net.fen().blocks[0].weight.values().end());
  const std::vector<std::size_t> labels{0, 3, 5, 7};
  auto params = net.parameters();
  cross_entropy(softmax(net.logits(a, b, Mode::Train)), labels).backward();
  SgdOptimizer sgd(0.1);
  sgd.step(params);
  const auto after = net.fen().blocks[0].weight.values();
  CHECK_FALSE(std::equal(before.begin(), before.end(), after.begin()));
  // Only one copy of the extractor exists among the trainable tensors.
  std::size_t conv0 = 0;
  for (const auto& p : params) conv0 += p.name == "fen.block0.conv.weight";
  CHECK(conv0 == 1);
}

TEST_CASE("extractor config validation") {
  FenConfig cfg = FenConfig::desk();
  cfg.input_side = 36;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = FenConfig::desk();
  cfg.block_channels.clear();
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = FenConfig::desk();
  cfg.feature_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("he_uniform stays within its bound") {
  std::mt19937_64 rng(8);
  const Tensor w = he_uniform({3, 3, 4, 5}, 36, rng);
  const float bound = std::sqrt(6.0f / 36.0f);
  for (float v : w.values()) CHECK(std::abs(v) <= bound);
}
