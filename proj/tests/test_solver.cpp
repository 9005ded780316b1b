#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fragnet/network.hpp"
#include "fragnet/solver.hpp"
#include "fragnet/synthetic.hpp"

using namespace fragnet;

namespace {

ProbabilityMatrix dirichlet_matrix(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < n; ++c) s += v[r * n + c] = e(rng);
    for (std::size_t c = 0; c < n; ++c) v[r * n + c] /= s;
  }
  return ProbabilityMatrix(n, std::move(v));
}

ProbabilityMatrix permutation_matrix(const std::vector<std::size_t>& perm) {
  ProbabilityMatrix m(perm.size());
  for (std::size_t r = 0; r < perm.size(); ++r) m(r, perm[r]) = 1.0;
  return m;
}

std::vector<Fragment> puzzle(const SamplerConfig& cfg, std::uint64_t seed, const ImageRGB& frame) {
  std::mt19937_64 rng(seed);
  return sample_grid(cfg, frame, rng);
}

}  // namespace

TEST_CASE("matrix and assignment basics") {
  CHECK_THROWS_AS(ProbabilityMatrix(0), ContractError);
  CHECK_THROWS_AS(ProbabilityMatrix(2, {1, 0, 0}), ContractError);
  CHECK(ProbabilityMatrix(2, {0.3, 0.7, 1.0, 0.0}).is_row_stochastic());
  CHECK_FALSE(ProbabilityMatrix(2, {0.3, 0.6, 1.0, 0.0}).is_row_stochastic());
  CHECK(Assignment{{2, 0, 1}}.is_bijection());
  CHECK_FALSE(Assignment{{2, 0, 2}}.is_bijection());
  CHECK(assignment_score(ProbabilityMatrix(2, {0.6, 0.4, 0.5, 0.5}), Assignment{{1, 0}}) == 0.9);
}

TEST_CASE("greedy worked examples") {
  const ProbabilityMatrix easy(2, {0.6, 0.4, 0.5, 0.5});
  CHECK(solve_greedy(easy) == Assignment{{0, 1}});
  CHECK(assignment_score(easy, solve_greedy(easy)) == doctest::Approx(1.1));
  CHECK(solve_optimal(easy) == Assignment{{0, 1}});

  const ProbabilityMatrix witness(2, {0.6, 0.5, 0.5, 0.0});
  CHECK(solve_greedy(witness) == Assignment{{0, 1}});
  CHECK(assignment_score(witness, solve_greedy(witness)) == 0.6);
  CHECK(solve_optimal(witness) == Assignment{{1, 0}});
  CHECK(assignment_score(witness, solve_optimal(witness)) == 1.0);
}

TEST_CASE("permutation matrices are recovered by both solvers") {
  std::mt19937_64 rng(1);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const ProbabilityMatrix m = permutation_matrix(perm);
    CHECK(solve_greedy(m).location_of == perm);
    CHECK(solve_optimal(m).location_of == perm);
    CHECK(assignment_score(m, solve_optimal(m)) == 8.0);
  }
}

TEST_CASE("ties break towards the smallest row and column") {
  const ProbabilityMatrix flat(3, std::vector<double>(9, 1.0 / 3));
  CHECK(solve_greedy(flat) == Assignment{{0, 1, 2}});
  CHECK(solve_optimal(flat) == Assignment{{0, 1, 2}});
}

TEST_CASE("optimal search refuses large matrices and is fast at 8") {
  CHECK_THROWS_AS(solve_optimal(ProbabilityMatrix(11)), ContractError);
  std::mt19937_64 rng(2);
  const auto m = dirichlet_matrix(8, rng);
  const auto t0 = std::chrono::steady_clock::now();
  solve_optimal(m);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(1));
}

TEST_CASE("random matrices: bijections and greedy never beats optimal") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto m = dirichlet_matrix(8, rng);
    const Assignment g = solve_greedy(m), o = solve_optimal(m);
    CHECK(g.is_bijection());
    CHECK(o.is_bijection());
    CHECK(assignment_score(m, g) <= assignment_score(m, o) + 1e-12);
  }
}

TEST_CASE("greedy is optimal on permutation-dominant matrices") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 300; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    ProbabilityMatrix m = dirichlet_matrix(8, rng);
    // Push each row's mass onto its permuted column until it is the row max.
    for (std::size_t r = 0; r < 8; ++r) {
      const double boost = 0.5 + 0.5 * u(rng);
      for (std::size_t c = 0; c < 8; ++c) m(r, c) *= (1.0 - boost);
      m(r, perm[r]) += boost;
    }
    REQUIRE(m.is_row_stochastic());
    CHECK(solve_greedy(m).location_of == perm);
    CHECK(assignment_score(m, solve_greedy(m)) == doctest::Approx(assignment_score(m, solve_optimal(m))));
  }
}

TEST_CASE("greedy matches the optimum on at least half of random matrices") {
  std::mt19937_64 rng(5);
  const int trials = 1000;
  int equal = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const auto m = dirichlet_matrix(8, rng);
    const double g = assignment_score(m, solve_greedy(m));
    const double o = assignment_score(m, solve_optimal(m));
    if (solve_greedy(m) == solve_optimal(m)) {
      ++equal;
    } else {
      CHECK(g < o);
    }
  }
  const double rate = double(equal) / trials;
  MESSAGE("greedy == optimal on " << rate << " of random 8x8 matrices");
  CHECK(rate >= 0.5);
}

TEST_CASE("puzzle scoring") {
  const Assignment truth{{0, 1, 2, 3, 4, 5, 6, 7}};
  const PuzzleMetrics same = score_assignment(truth, truth);
  CHECK(same.perfect_solve);
  CHECK(same.correctly_placed == 8);
  const PuzzleMetrics swapped = score_assignment(Assignment{{0, 1, 2, 4, 3, 5, 6, 7}}, truth);
  CHECK_FALSE(swapped.perfect_solve);
  CHECK(swapped.correctly_placed == 6);
  CHECK_THROWS_AS(score_assignment(Assignment{{0}}, truth), ContractError);
}

TEST_CASE("matrices built from a predictor") {
  SamplerConfig cfg = SamplerConfig::desk();
  const ImageRGB frame = generate_one({SyntheticKind::Gradient, 128, 1, 9}, 0);
  const auto frags = puzzle(cfg, 1, frame);

  SUBCASE("rows are distributions and the truth predictor solves perfectly") {
    const PuzzleOutcome out = solve_puzzle(truth_predictor(), frags);
    CHECK(out.matrix.is_row_stochastic());
    CHECK(out.metrics.perfect_solve);
    CHECK(out.greedy == out.truth);
    CHECK(out.greedy_score == 8.0);
    CHECK(out.optimal_score == 8.0);
  }
  SUBCASE("a zero-initialised head gives 1/8 everywhere") {
    PairNetwork<float> net(ModelConfig::desk(), 3, true);
    const ProbabilityMatrix m = build_matrix(network_predictor(net), frags);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 8; ++c) CHECK(m(r, c) == doctest::Approx(0.125));
  }
  SUBCASE("duplicated fragments give identical rows") {
    PairNetwork<float> net(ModelConfig::desk(), 4);
    auto dup = frags;
    dup[1].pixels = dup[0].pixels;
    const ProbabilityMatrix m = build_matrix(network_predictor(net), dup);
    for (std::size_t c = 0; c < 8; ++c) CHECK(m(0, c) == m(1, c));
    CHECK(m.is_row_stochastic(1e-5));
  }
  SUBCASE("wrong fragment counts are rejected") {
    auto short_list = frags;
    short_list.pop_back();
    CHECK_THROWS_AS(build_matrix(truth_predictor(), short_list), ContractError);
  }
}

TEST_CASE("reconstruction rendering") {
  SamplerConfig cfg = SamplerConfig::desk();
  cfg.jitter = 0;
  const ImageRGB frame = generate_one({SyntheticKind::Blobs, 128, 1, 2}, 0);
  const auto frags = puzzle(cfg, 1, frame);
  const Assignment truth = ground_truth(frags);

  SUBCASE("identity placement reproduces the frame with the gaps blanked") {
    const ImageRGB out = render_reconstruction(frags, truth, cfg);
    CHECK(out.width == 128);
    CHECK(out.height == 128);
    ImageRGB masked(128, 128);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        const PixelOrigin o = base_origin(cfg, {r, c});
        for (std::size_t y = 0; y < 32; ++y)
          for (std::size_t x = 0; x < 32; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) masked.at(o.y + y, o.x + x, ch) = frame.at(o.y + y, o.x + x, ch);
      }
    CHECK(out == masked);
  }
  SUBCASE("misplaced fragments get a red border") {
    Assignment wrong = truth;
    std::swap(wrong.location_of[0], wrong.location_of[1]);
    std::swap(wrong.location_of[5], wrong.location_of[7]);
    const ImageRGB out = render_reconstruction(frags, wrong, cfg, &truth);
    std::size_t red = 0;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        const PixelOrigin o = base_origin(cfg, {r, c});
        bool ring = true;
        for (std::size_t k = 0; k < 32; ++k)
          for (auto [y, x] : {std::pair{o.y, o.x + k}, {o.y + 1, o.x + k}, {o.y + 31, o.x + k}, {o.y + k, o.x + 30}})
            ring = ring && out.at(y, x, 0) == 255 && out.at(y, x, 1) == 0 && out.at(y, x, 2) == 0;
        red += ring;
      }
    CHECK(red == 4);
  }
  SUBCASE("invalid assignments are rejected") {
    CHECK_THROWS_AS(render_reconstruction(frags, Assignment{{0, 0, 1, 2, 3, 4, 5, 6}}, cfg), ContractError);
  }
}

TEST_CASE("corpus report") {
  CorpusReport report;
  report.rows.push_back({"a.ppm", true, 8, 7.5, 7.5});
  report.rows.push_back({"b.ppm", false, 6, 5.25, 5.5});
  CHECK(report.perfect_rate() == 0.5);
  CHECK(report.fraction_correctly_placed() == doctest::Approx(14.0 / 16));
  CHECK(report.to_csv() ==
        "image,perfect,correctly_placed,greedy_score,optimal_score\n"
        "a.ppm,1,8,7.5,7.5\nb.ppm,0,6,5.25,5.5\n");
  CHECK(CorpusReport{}.perfect_rate() == 0.0);
}
