#include <cmath>
#include <random>

#include "doctest.h"
#include "fragnet/fusion.hpp"
#include "fragnet/gradcheck.hpp"
#include "fragnet/network.hpp"

using namespace fragnet;

namespace {

TensorD random_d(Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = d(rng);
  return TensorD(std::move(shape), std::move(v), grad);
}

Tensor random_f(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = d(rng);
  return Tensor(std::move(shape), std::move(v));
}

double norm2(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

TEST_CASE("concatenation") {
  const Tensor c = combine_concat(Tensor({2}, {1, 2}), Tensor({2}, {3, 4}));
  CHECK(c.shape() == Shape{4});
  for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == float(i + 1));
  CHECK(FusionConfig::full(FusionKind::Concat).combined_dim() == 1024);

  const TensorD a = random_d({3, 5}, 1), b = random_d({3, 5}, 2);
  const TensorD ab = combine_concat(a, b);
  CHECK(ab.shape() == Shape{3, 10});
  CHECK(norm2(ab.values()) == doctest::Approx(norm2(a.values()) + norm2(b.values())));

  TensorD x = random_d({4}, 3, true), y = random_d({4}, 4, true);
  sum(combine_concat(x, y)).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
  for (double g : y.grad()) CHECK(g == 1.0);
}

TEST_CASE("Kronecker product") {
  const Tensor k = combine_kronecker(Tensor({2}, {1, 2}), Tensor({2}, {3, 4}));
  CHECK(k.shape() == Shape{4});
  CHECK(k[0] == 3.0f);
  CHECK(k[1] == 4.0f);
  CHECK(k[2] == 6.0f);
  CHECK(k[3] == 8.0f);
  CHECK(FusionConfig::full(FusionKind::Kronecker).combined_dim() == 262144);

  SUBCASE("one-hot inputs select a single entry") {
    std::vector<float> e2(5, 0.0f), e4(5, 0.0f);
    e2[2] = 1.0f;
    e4[4] = 1.0f;
    const Tensor p = combine_kronecker(Tensor({5}, e2), Tensor({5}, e4));
    for (std::size_t i = 0; i < 25; ++i) CHECK(p[i] == (i == 2 * 5 + 4 ? 1.0f : 0.0f));
  }
  SUBCASE("bilinear in each argument") {
    const TensorD a = random_d({2, 6}, 5), a2 = random_d({2, 6}, 6), b = random_d({2, 6}, 7);
    const double s = 1.7;
    std::vector<double> mix(12);
    for (std::size_t i = 0; i < 12; ++i) mix[i] = a[i] + s * a2[i];
    const TensorD lhs = combine_kronecker(TensorD({2, 6}, mix), b);
    const TensorD ka = combine_kronecker(a, b), ka2 = combine_kronecker(a2, b);
    for (std::size_t i = 0; i < lhs.numel(); ++i) CHECK(lhs[i] == doctest::Approx(ka[i] + s * ka2[i]));
  }
  SUBCASE("swapping arguments permutes the entries") {
    const TensorD a = random_d({4}, 8), b = random_d({4}, 9);
    const TensorD ab = combine_kronecker(a, b), ba = combine_kronecker(b, a);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(ab[i * 4 + j] == ba[j * 4 + i]);
  }
  SUBCASE("gradient matches finite differences") {
    std::vector<TensorD> wrt{random_d({2, 3}, 10, true), random_d({2, 3}, 11, true)};
    const TensorD weights = random_d({2, 9}, 12);
    const auto report = check_gradients(
        "kron", [&] { return sum(mul(combine_kronecker(wrt[0], wrt[1]), weights)); }, wrt);
    CHECK(report.passed());
  }
  SUBCASE("mismatched batches are rejected") {
    CHECK_THROWS_AS(combine_kronecker(random_d({2, 3}, 1), random_d({3, 3}, 2)), ContractError);
    CHECK_THROWS_AS(combine_concat(random_d({2, 3}, 1), random_d({3, 3}, 2)), ContractError);
  }
}

TEST_CASE("classification head") {
  SUBCASE("full-size concat head's first layer has 524288 weights") {
    std::mt19937_64 rng(1);
    const auto params = FusionParams<float>::init(FusionConfig::full(FusionKind::Concat), rng);
    CHECK(params.hidden.front().weight.numel() == 524288);
    CHECK(params.out_weight.shape() == Shape{512, 8});
  }
  SUBCASE("zero-initialised output layer predicts uniformly") {
    const FusionConfig cfg = FusionConfig::desk(FusionKind::Kronecker);
    std::mt19937_64 rng(2);
    auto params = FusionParams<float>::init(cfg, rng, true);
    const Tensor p = classify(cfg, params, random_f({3, cfg.combined_dim()}, 3), Mode::Train);
    for (float v : p.values()) CHECK(v == doctest::Approx(0.125));
  }
  SUBCASE("probabilities sum to one") {
    const FusionConfig cfg = FusionConfig::desk(FusionKind::Concat);
    std::mt19937_64 rng(3);
    auto params = FusionParams<float>::init(cfg, rng);
    const Tensor p = classify(cfg, params, random_f({5, 128}, 4), Mode::Train);
    CHECK(p.shape() == Shape{5, 8});
    for (std::size_t n = 0; n < 5; ++n) {
      double s = 0;
      for (std::size_t c = 0; c < 8; ++c) s += p[n * 8 + c];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  SUBCASE("wrong combined width is rejected") {
    const FusionConfig cfg = FusionConfig::desk(FusionKind::Concat);
    std::mt19937_64 rng(4);
    auto params = FusionParams<float>::init(cfg, rng);
    CHECK_THROWS_AS(classify_logits(cfg, params, random_f({2, 127}, 5), Mode::Train), ContractError);
  }
  SUBCASE("config validation") {
    FusionConfig cfg = FusionConfig::desk();
    cfg.num_classes = 9;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = FusionConfig::desk();
    cfg.hidden_dims.clear();
    CHECK_THROWS_AS(cfg.validate(), ContractError);
  }
}

TEST_CASE("the pair network is order sensitive for both fusion kinds") {
  for (FusionKind kind : {FusionKind::Concat, FusionKind::Kronecker}) {
    PairNetwork<float> net(ModelConfig::desk(kind), 5);
    const Tensor a = random_f({3, 32, 32, 3}, 6), b = random_f({3, 32, 32, 3}, 7);
    const Tensor ab = net.logits(a, b, Mode::Infer);
    const Tensor ba = net.logits(b, a, Mode::Infer);
    double diff = 0;
    for (std::size_t i = 0; i < ab.numel(); ++i) diff += std::abs(ab[i] - ba[i]);
    CHECK(diff > 0.1);
  }
}

TEST_CASE("fusion names") {
  CHECK(parse_fusion("concat") == FusionKind::Concat);
  CHECK(parse_fusion("kron") == FusionKind::Kronecker);
  CHECK(parse_fusion("kronecker") == FusionKind::Kronecker);
  CHECK(std::string(fusion_name(FusionKind::Kronecker)) == "kron");
  CHECK_THROWS_AS(parse_fusion("sum"), ContractError);
}
