#include "fragnet/predictor.hpp"

namespace fragnet {

PairPredictor network_predictor(PairNetwork<float>& network) {
  return [&network](std::span<const Fragment* const> centrals,
                    std::span<const Fragment* const> neighbors) {
    if (centrals.size() != neighbors.size()) {
      throw ContractError("predictor: central and neighbor counts differ");
    }
    std::vector<LocationDistribution> out;
    if (centrals.empty()) return out;
    NoGradGuard no_grad;
    const Tensor probs = network.probabilities(
        stack_pixels({centrals.begin(), centrals.end()}),
        stack_pixels({neighbors.begin(), neighbors.end()}), Mode::Infer);
    out.resize(centrals.size());
    for (std::size_t r = 0; r < out.size(); ++r)
      for (std::size_t k = 0; k < kNumClasses; ++k) out[r][k] = probs[r * kNumClasses + k];
    return out;
  };
}

PairPredictor truth_predictor() {
  return [](std::span<const Fragment* const> centrals, std::span<const Fragment* const> neighbors) {
    if (centrals.size() != neighbors.size()) {
      throw ContractError("predictor: central and neighbor counts differ");
    }
    std::vector<LocationDistribution> out(neighbors.size());
    for (std::size_t r = 0; r < neighbors.size(); ++r) {
      out[r].fill(0.0);
      out[r][label_of(neighbors[r]->cell).index()] = 1.0;
    }
    return out;
  };
}

std::size_t argmax(const LocationDistribution& dist) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < dist.size(); ++k) {
    if (dist[k] > dist[best]) best = k;
  }
  return best;
}

}  // namespace fragnet
