#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fragnet/image.hpp"
#include "fragnet/predictor.hpp"
#include "fragnet/sampler.hpp"

namespace fragnet {

enum class SyntheticKind { Gradient, Checker, Blobs };

const char* synthetic_name(SyntheticKind kind);
SyntheticKind parse_synthetic(const std::string& name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::Gradient;
  std::size_t frame_side = 128;
  std::size_t count = 1;
  std::uint64_t seed = 0;
};

// gradient: red ramps along an axis tilted by up to +-10 degrees, green along
//   the perpendicular axis, blue a noisy constant. Slope is 180 levels per
//   frame side.
// checker: random period, phase and two colours.
// blobs: Gaussian colour blobs over a flat background.
// Image i is drawn from its own RNG seeded with (seed, i).
std::vector<ImageRGB> generate(const SyntheticSpec& spec);
ImageRGB generate_one(const SyntheticSpec& spec, std::size_t index);

// Closed-form relative-position classifier for the gradient corpus: compares
// mean red (columns) and mean green (rows) of the two fragments against half
// the expected cell-to-cell colour step. Independent of the network.
PairPredictor mean_color_predictor(const SamplerConfig& cfg);

}  // namespace fragnet
