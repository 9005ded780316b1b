#include "fragnet/sampler.hpp"

#include <string>

#include "fragnet/ops.hpp"

namespace fragnet {

SamplerConfig SamplerConfig::desk() {
  SamplerConfig cfg;
  cfg.frame_side = 128;
  cfg.fragment_side = 32;
  cfg.gap = 12;
  cfg.jitter = 4;
  return cfg;
}

void SamplerConfig::validate() const {
  if (frame_side == 0 || fragment_side == 0) {
    throw ContractError("sampler: frame_side and fragment_side must be positive");
  }
  const std::size_t needed = 3 * fragment_side + 2 * gap + 2 * jitter;
  if (needed > frame_side) {
    throw ContractError("sampler: 3*fragment_side + 2*gap + 2*jitter = " + std::to_string(needed) +
                        " exceeds frame_side " + std::to_string(frame_side));
  }
}

std::size_t SamplerConfig::margin() const {
  return (frame_side - (3 * fragment_side + 2 * gap)) / 2;
}

RelativePosition::RelativePosition(std::size_t class_index) : index_(class_index) {
  if (class_index >= kNumClasses) {
    throw ContractError("relative position class " + std::to_string(class_index) +
                        " out of range [0, 8)");
  }
}

RelativePosition label_of(Cell cell) {
  if (cell.row > 2 || cell.col > 2 || cell == kCenterCell) {
    throw ContractError("cell (" + std::to_string(cell.row) + ", " + std::to_string(cell.col) +
                        ") has no relative position label");
  }
  const std::size_t flat = cell.row * 3 + cell.col;
  return RelativePosition(flat < 4 ? flat : flat - 1);
}

Cell cell_of(RelativePosition label) {
  const std::size_t flat = label.index() < 4 ? label.index() : label.index() + 1;
  return {flat / 3, flat % 3};
}

PixelOrigin base_origin(const SamplerConfig& cfg, Cell cell) {
  if (cell.row > 2 || cell.col > 2) throw ContractError("base_origin: cell outside the 3x3 grid");
  const std::size_t stride = cfg.fragment_side + cfg.gap;
  return {cfg.margin() + cell.row * stride, cfg.margin() + cell.col * stride};
}

Fragment crop_fragment(const ImageRGB& frame, Cell cell, PixelOrigin origin,
                       std::size_t fragment_side) {
  if (origin.y + fragment_side > frame.height || origin.x + fragment_side > frame.width) {
    throw ContractError("fragment at (" + std::to_string(origin.y) + ", " +
                        std::to_string(origin.x) + ") leaves the frame");
  }
  std::vector<float> values(fragment_side * fragment_side * 3);
  for (std::size_t y = 0; y < fragment_side; ++y)
    for (std::size_t x = 0; x < fragment_side; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        values[(y * fragment_side + x) * 3 + c] =
            static_cast<float>(frame.at(origin.y + y, origin.x + x, c)) / 127.5f - 1.0f;
  return {cell, origin, Tensor({fragment_side, fragment_side, 3}, std::move(values))};
}

namespace {

void check_frame(const SamplerConfig& cfg, const ImageRGB& frame) {
  cfg.validate();
  if (frame.width != cfg.frame_side || frame.height != cfg.frame_side) {
    throw ContractError("frame is " + std::to_string(frame.width) + "x" +
                        std::to_string(frame.height) + ", sampler expects " +
                        std::to_string(cfg.frame_side) + "x" + std::to_string(cfg.frame_side));
  }
}

Fragment jittered(const SamplerConfig& cfg, const ImageRGB& frame, Cell cell, std::mt19937_64& rng) {
  const long j = static_cast<long>(cfg.jitter);
  std::uniform_int_distribution<long> offset(-j, j);
  const PixelOrigin base = base_origin(cfg, cell);
  const long dy = offset(rng);
  const long dx = offset(rng);
  const PixelOrigin origin{static_cast<std::size_t>(static_cast<long>(base.y) + dy),
                           static_cast<std::size_t>(static_cast<long>(base.x) + dx)};
  return crop_fragment(frame, cell, origin, cfg.fragment_side);
}

}  // namespace

PairSample sample_pair(const SamplerConfig& cfg, const ImageRGB& frame, std::mt19937_64& rng) {
  check_frame(cfg, frame);
  std::uniform_int_distribution<std::size_t> pick(0, kNumClasses - 1);
  const RelativePosition label(pick(rng));
  Fragment central = jittered(cfg, frame, kCenterCell, rng);
  Fragment neighbor = jittered(cfg, frame, cell_of(label), rng);
  return {std::move(central), std::move(neighbor), label};
}

std::vector<Fragment> sample_grid(const SamplerConfig& cfg, const ImageRGB& frame,
                                  std::mt19937_64& rng) {
  check_frame(cfg, frame);
  std::vector<Fragment> fragments;
  fragments.reserve(9);
  for (std::size_t row = 0; row < 3; ++row)
    for (std::size_t col = 0; col < 3; ++col) fragments.push_back(jittered(cfg, frame, {row, col}, rng));
  return fragments;
}

Tensor stack_pixels(const std::vector<const Fragment*>& fragments) {
  std::vector<Tensor> items;
  items.reserve(fragments.size());
  for (const Fragment* f : fragments) items.push_back(f->pixels);
  return stack<float>(items);
}

}  // namespace fragnet
