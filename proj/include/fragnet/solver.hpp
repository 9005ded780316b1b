#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fragnet/image.hpp"
#include "fragnet/predictor.hpp"
#include "fragnet/sampler.hpp"

namespace fragnet {

// Square score matrix: rows are fragments, columns are locations.
class ProbabilityMatrix {
 public:
  explicit ProbabilityMatrix(std::size_t n);
  ProbabilityMatrix(std::size_t n, std::vector<double> values);

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t row, std::size_t col) const { return values_[row * n_ + col]; }
  double& operator()(std::size_t row, std::size_t col) { return values_[row * n_ + col]; }

  bool is_row_stochastic(double tolerance = 1e-6) const;

 private:
  std::size_t n_;
  std::vector<double> values_;
};

// location_of[fragment] = location column.
struct Assignment {
  std::vector<std::size_t> location_of;

  bool is_bijection() const;
  bool operator==(const Assignment&) const = default;
};

double assignment_score(const ProbabilityMatrix& m, const Assignment& a);

// Repeatedly takes the largest remaining entry and strikes out its row and
// column. Ties go to the smallest (row, column).
Assignment solve_greedy(const ProbabilityMatrix& m);

// Exhaustive search over all n! permutations, first maximum in lexicographic
// order. Refuses n > 10.
Assignment solve_optimal(const ProbabilityMatrix& m);

struct PuzzleMetrics {
  bool perfect_solve = false;
  std::size_t correctly_placed = 0;
};

PuzzleMetrics score_assignment(const Assignment& assignment, const Assignment& truth);

// Indices (into a 9-fragment grid) of the eight non-centre fragments, in order.
std::vector<std::size_t> neighbor_indices(const std::vector<Fragment>& fragments);

// The true location class of every non-centre fragment.
Assignment ground_truth(const std::vector<Fragment>& fragments);

// Row i scores the i-th non-centre fragment against the centre.
ProbabilityMatrix build_matrix(const PairPredictor& predictor, const std::vector<Fragment>& fragments);

struct PuzzleOutcome {
  ProbabilityMatrix matrix{kNumClasses};
  Assignment greedy;
  Assignment optimal;
  Assignment truth;
  PuzzleMetrics metrics;  // of the greedy assignment
  double greedy_score = 0.0;
  double optimal_score = 0.0;
};

PuzzleOutcome solve_puzzle(const PairPredictor& predictor, const std::vector<Fragment>& fragments,
                           bool with_oracle = true);

// Pastes the centre at its base origin and every other fragment at the base
// origin of its assigned location. With `truth`, misplaced fragments get a
// 2-pixel red border.
ImageRGB render_reconstruction(const std::vector<Fragment>& fragments, const Assignment& assignment,
                               const SamplerConfig& cfg, const Assignment* truth = nullptr);

struct PuzzleReportRow {
  std::string image;
  bool perfect = false;
  std::size_t correctly_placed = 0;
  double greedy_score = 0.0;
  double optimal_score = 0.0;
};

struct CorpusReport {
  std::vector<PuzzleReportRow> rows;

  double perfect_rate() const;
  // Mean of correctly_placed / 8.
  double fraction_correctly_placed() const;
  // "image,perfect,correctly_placed,greedy_score,optimal_score"
  std::string to_csv() const;
};

}  // namespace fragnet
