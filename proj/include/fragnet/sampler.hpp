#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "fragnet/image.hpp"
#include "fragnet/tensor.hpp"

namespace fragnet {

inline constexpr std::size_t kNumClasses = 8;

// Geometry of the 3x3 fragment grid laid over a square frame.
struct SamplerConfig {
  std::size_t frame_side = 398;
  std::size_t fragment_side = 96;
  std::size_t gap = 48;
  std::size_t jitter = 7;
  std::uint64_t seed = 0;

  // Small frame used by the tests and the end-to-end runs.
  static SamplerConfig desk();

  void validate() const;
  // Offset of the 3x3 block inside the frame (floor of the leftover / 2).
  std::size_t margin() const;
};

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const Cell&) const = default;
};

inline constexpr Cell kCenterCell{1, 1};

struct PixelOrigin {
  std::size_t y = 0;
  std::size_t x = 0;
  bool operator==(const PixelOrigin&) const = default;
};

// Class index of a neighbour relative to the centre. Row-major over the eight
// non-centre cells: 0 up-left, 1 up, 2 up-right, 3 left, 4 right,
// 5 down-left, 6 down, 7 down-right.
class RelativePosition {
 public:
  explicit RelativePosition(std::size_t class_index);
  std::size_t index() const noexcept { return index_; }
  bool operator==(const RelativePosition&) const = default;

 private:
  std::size_t index_;
};

RelativePosition label_of(Cell cell);
Cell cell_of(RelativePosition label);

struct Fragment {
  Cell cell;
  PixelOrigin origin;
  Tensor pixels;  // [fragment_side, fragment_side, 3], model range
};

struct PairSample {
  Fragment central;
  Fragment neighbor;
  RelativePosition label{0};
};

PixelOrigin base_origin(const SamplerConfig& cfg, Cell cell);

// Crops a fragment_side square at `origin` and converts it to model range.
Fragment crop_fragment(const ImageRGB& frame, Cell cell, PixelOrigin origin,
                       std::size_t fragment_side);

// Centre fragment plus one uniformly chosen neighbour, each independently
// jittered by an integer offset in [-jitter, jitter] per axis.
PairSample sample_pair(const SamplerConfig& cfg, const ImageRGB& frame, std::mt19937_64& rng);

// All nine cells in row-major order, independently jittered.
std::vector<Fragment> sample_grid(const SamplerConfig& cfg, const ImageRGB& frame,
                                  std::mt19937_64& rng);

// Batches fragment pixels into an [N, side, side, 3] tensor.
Tensor stack_pixels(const std::vector<const Fragment*>& fragments);

}  // namespace fragnet
