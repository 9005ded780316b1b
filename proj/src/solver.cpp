#include "fragnet/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace fragnet {

ProbabilityMatrix::ProbabilityMatrix(std::size_t n) : ProbabilityMatrix(n, std::vector<double>(n * n, 0.0)) {}

ProbabilityMatrix::ProbabilityMatrix(std::size_t n, std::vector<double> values)
    : n_(n), values_(std::move(values)) {
  if (n == 0) throw ContractError("probability matrix must be at least 1x1");
  if (values_.size() != n * n) {
    throw ContractError("probability matrix of size " + std::to_string(n) + " needs " +
                        std::to_string(n * n) + " values, got " + std::to_string(values_.size()));
  }
}

bool ProbabilityMatrix::is_row_stochastic(double tolerance) const {
  for (std::size_t r = 0; r < n_; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < n_; ++c) {
      const double v = (*this)(r, c);
      if (!(v >= 0.0 && v <= 1.0)) return false;
      total += v;
    }
    if (std::abs(total - 1.0) > tolerance) return false;
  }
  return true;
}

bool Assignment::is_bijection() const {
  std::vector<bool> used(location_of.size(), false);
  for (std::size_t loc : location_of) {
    if (loc >= used.size() || used[loc]) return false;
    used[loc] = true;
  }
  return true;
}

double assignment_score(const ProbabilityMatrix& m, const Assignment& a) {
  if (a.location_of.size() != m.size()) {
    throw ContractError("assignment covers " + std::to_string(a.location_of.size()) +
                        " fragments, matrix has " + std::to_string(m.size()));
  }
  double total = 0.0;
  for (std::size_t r = 0; r < m.size(); ++r) total += m(r, a.location_of[r]);
  return total;
}

Assignment solve_greedy(const ProbabilityMatrix& m) {
  const std::size_t n = m.size();
  std::vector<bool> row_used(n, false), col_used(n, false);
  Assignment a{std::vector<std::size_t>(n, 0)};
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best_r = n, best_c = n;
    for (std::size_t r = 0; r < n; ++r) {
      if (row_used[r]) continue;
      for (std::size_t c = 0; c < n; ++c) {
        if (col_used[c]) continue;
        if (best_r == n || m(r, c) > m(best_r, best_c)) {
          best_r = r;
          best_c = c;
        }
      }
    }
    row_used[best_r] = true;
    col_used[best_c] = true;
    a.location_of[best_r] = best_c;
  }
  return a;
}

Assignment solve_optimal(const ProbabilityMatrix& m) {
  const std::size_t n = m.size();
  if (n > 10) {
    throw ContractError("solve_optimal: brute force is limited to n <= 10, got " + std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best{perm};
  double best_score = assignment_score(m, best);
  while (std::next_permutation(perm.begin(), perm.end())) {
    double score = 0.0;
    for (std::size_t r = 0; r < n; ++r) score += m(r, perm[r]);
    if (score > best_score) {
      best_score = score;
      best.location_of = perm;
    }
  }
  return best;
}

PuzzleMetrics score_assignment(const Assignment& assignment, const Assignment& truth) {
  if (assignment.location_of.size() != truth.location_of.size()) {
    throw ContractError("assignment and ground truth differ in size");
  }
  PuzzleMetrics metrics;
  for (std::size_t i = 0; i < truth.location_of.size(); ++i) {
    if (assignment.location_of[i] == truth.location_of[i]) ++metrics.correctly_placed;
  }
  metrics.perfect_solve = metrics.correctly_placed == truth.location_of.size();
  return metrics;
}

namespace {

void check_grid(const std::vector<Fragment>& fragments) {
  if (fragments.size() != 9) {
    throw ContractError("puzzle needs exactly 9 fragments, got " + std::to_string(fragments.size()));
  }
  const auto centers = std::count_if(fragments.begin(), fragments.end(),
                                     [](const Fragment& f) { return f.cell == kCenterCell; });
  if (centers != 1) throw ContractError("puzzle needs exactly one central fragment");
}

const Fragment& center_of(const std::vector<Fragment>& fragments) {
  return *std::find_if(fragments.begin(), fragments.end(),
                       [](const Fragment& f) { return f.cell == kCenterCell; });
}

}  // namespace

std::vector<std::size_t> neighbor_indices(const std::vector<Fragment>& fragments) {
  check_grid(fragments);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    if (!(fragments[i].cell == kCenterCell)) idx.push_back(i);
  }
  return idx;
}

Assignment ground_truth(const std::vector<Fragment>& fragments) {
  Assignment truth;
  for (std::size_t i : neighbor_indices(fragments)) {
    truth.location_of.push_back(label_of(fragments[i].cell).index());
  }
  return truth;
}

ProbabilityMatrix build_matrix(const PairPredictor& predictor, const std::vector<Fragment>& fragments) {
  const std::vector<std::size_t> idx = neighbor_indices(fragments);
  const Fragment* center = &center_of(fragments);
  std::vector<const Fragment*> centrals(idx.size(), center), neighbors;
  for (std::size_t i : idx) neighbors.push_back(&fragments[i]);
  const std::vector<LocationDistribution> dists = predictor(centrals, neighbors);
  ProbabilityMatrix m(kNumClasses);
  for (std::size_t r = 0; r < kNumClasses; ++r)
    for (std::size_t c = 0; c < kNumClasses; ++c) m(r, c) = dists[r][c];
  return m;
}

PuzzleOutcome solve_puzzle(const PairPredictor& predictor, const std::vector<Fragment>& fragments,
                           bool with_oracle) {
  PuzzleOutcome out;
  out.matrix = build_matrix(predictor, fragments);
  out.truth = ground_truth(fragments);
  out.greedy = solve_greedy(out.matrix);
  out.greedy_score = assignment_score(out.matrix, out.greedy);
  if (with_oracle) {
    out.optimal = solve_optimal(out.matrix);
    out.optimal_score = assignment_score(out.matrix, out.optimal);
  }
  out.metrics = score_assignment(out.greedy, out.truth);
  return out;
}

ImageRGB render_reconstruction(const std::vector<Fragment>& fragments, const Assignment& assignment,
                               const SamplerConfig& cfg, const Assignment* truth) {
  const std::vector<std::size_t> idx = neighbor_indices(fragments);
  if (assignment.location_of.size() != idx.size() || !assignment.is_bijection()) {
    throw ContractError("render: assignment must be a bijection over the 8 neighbours");
  }
  if (truth && truth->location_of.size() != idx.size()) {
    throw ContractError("render: ground truth must cover the 8 neighbours");
  }
  ImageRGB canvas(cfg.frame_side, cfg.frame_side);
  const std::size_t side = cfg.fragment_side;
  const auto paste = [&](const Fragment& f, Cell cell, bool misplaced) {
    if (f.pixels.rank() != 3 || f.pixels.dim(0) != side || f.pixels.dim(1) != side) {
      throw ContractError("render: fragment size does not match sampler config");
    }
    const PixelOrigin o = base_origin(cfg, cell);
    std::span<const float> px = f.pixels.values();
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const bool border = misplaced && (y < 2 || x < 2 || y + 2 >= side || x + 2 >= side);
        for (std::size_t c = 0; c < 3; ++c) {
          canvas.at(o.y + y, o.x + x, c) =
              border ? (c == 0 ? 255 : 0) : from_model_range(px[(y * side + x) * 3 + c]);
        }
      }
  };
  paste(center_of(fragments), kCenterCell, false);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t loc = assignment.location_of[i];
    const bool misplaced = truth && truth->location_of[i] != loc;
    paste(fragments[idx[i]], cell_of(RelativePosition(loc)), misplaced);
  }
  return canvas;
}

double CorpusReport::perfect_rate() const {
  if (rows.empty()) return 0.0;
  const auto n = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.perfect; });
  return static_cast<double>(n) / static_cast<double>(rows.size());
}

double CorpusReport::fraction_correctly_placed() const {
  if (rows.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : rows) total += static_cast<double>(r.correctly_placed) / kNumClasses;
  return total / static_cast<double>(rows.size());
}

std::string CorpusReport::to_csv() const {
  std::ostringstream out;
  out << "image,perfect,correctly_placed,greedy_score,optimal_score\n" << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.image << ',' << (r.perfect ? 1 : 0) << ',' << r.correctly_placed << ','
        << r.greedy_score << ',' << r.optimal_score << '\n';
  }
  return out.str();
}

}  // namespace fragnet
