#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "fragnet/network.hpp"
#include "fragnet/sampler.hpp"

namespace fragnet {

using LocationDistribution = std::array<double, kNumClasses>;

// Scores (central, neighbor) pairs; centrals[i] goes with neighbors[i].
using PairPredictor = std::function<std::vector<LocationDistribution>(
    std::span<const Fragment* const> centrals, std::span<const Fragment* const> neighbors)>;

// Batched inference-mode forward through `network`. The network must outlive
// the predictor.
PairPredictor network_predictor(PairNetwork<float>& network);

// One-hot on the true relative position read from the fragments' cells.
PairPredictor truth_predictor();

// Index of the largest probability; ties go to the smaller index.
std::size_t argmax(const LocationDistribution& dist);

}  // namespace fragnet
