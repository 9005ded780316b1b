#include <random>
#include <string>

#include "doctest.h"
#include "fragnet/gradcheck.hpp"
#include "fragnet/network.hpp"

using namespace fragnet;

TEST_CASE("gradient_matches uses an absolute floor and a relative tolerance") {
  const GradCheckOptions opts;
  CHECK(gradient_matches(0.0, 9e-6, opts));
  CHECK_FALSE(gradient_matches(0.0, 2e-5, opts));
  CHECK(gradient_matches(100.0, 100.09, opts));
  CHECK_FALSE(gradient_matches(100.0, 100.2, opts));
  CHECK(gradient_matches(-3.0, -3.0, opts));
}

TEST_CASE("every op passes the finite-difference check for seeds 1 to 10") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const auto& report : op_gradient_suite(seed)) {
      INFO("seed " << seed << " op " << report.name << " worst " << report.worst_error);
      CHECK(report.passed());
    }
  }
}

TEST_CASE("a wrong analytic gradient is caught") {
  std::vector<TensorD> wrt{TensorD({3}, {0.5, -1.0, 2.0}, true)};
  // w^2 * detach(w): the tape sees 2w^2, finite differences see 3w^2.
  const auto report = check_gradients("detached", [&] {
    return sum(mul(square(wrt[0]), wrt[0].detach()));
  }, wrt);
  CHECK(report.checked == 3);
  CHECK(report.failed == 3);
  CHECK_FALSE(report.passed());
}

TEST_CASE("network backward agrees with finite differences away from kinks") {
  // A step of 1e-6 is small enough that no probe crosses a ReLU or max-pool
  // switch point; at 1e-5 an occasional probe still does.
  GradCheckOptions fine;
  fine.step = 1e-6;
  for (FusionKind kind : {FusionKind::Concat, FusionKind::Kronecker}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto report = network_gradient_check(kind, seed, 40, fine);
      INFO(std::string(fusion_name(kind)) << " seed " << seed << " failed " << report.failed
                                          << " of " << report.checked);
      CHECK(report.checked >= 40);
      CHECK(report.passed());
    }
  }
}

TEST_CASE("the second branch's loss reaches the shared conv weights") {
  const ModelConfig cfg = ModelConfig::desk(FusionKind::Kronecker);
  PairNetwork<double> net(cfg, 4);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> a(2 * 32 * 32 * 3), b(a.size());
  for (double& x : a) x = d(rng);
  for (double& x : b) x = d(rng);
  const TensorD central({2, 32, 32, 3}, a), neighbor({2, 32, 32, 3}, b);
  const TensorD weights({2, 64}, std::vector<double>(128, 0.01));
  auto& fen = net.fen();
  std::vector<TensorD> wrt{fen.blocks[0].weight};
  const ProbeList probes{{0, 0}, {0, 7}, {0, 50}, {0, 150}, {0, 215}};
  GradCheckOptions fine;
  fine.step = 1e-6;
  const auto report = check_gradients("second branch", [&] {
    auto [phi1, phi2] = fen_shared_apply(cfg.fen, fen, central, neighbor, Mode::Train);
    return sum(mul(phi2, weights));
  }, wrt, fine, probes);
  CHECK(report.passed());
  CHECK(fen.blocks[0].weight.has_grad());
}
