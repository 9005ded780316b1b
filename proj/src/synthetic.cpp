#include "fragnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace fragnet {

const char* synthetic_name(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::Gradient: return "gradient";
    case SyntheticKind::Checker: return "checker";
    case SyntheticKind::Blobs: return "blobs";
  }
  return "unknown";
}

SyntheticKind parse_synthetic(const std::string& name) {
  if (name == "gradient") return SyntheticKind::Gradient;
  if (name == "checker") return SyntheticKind::Checker;
  if (name == "blobs") return SyntheticKind::Blobs;
  throw ContractError("unknown synthetic kind '" + name + "' (expected gradient, checker or blobs)");
}

namespace {

constexpr double kRampLevelsPerFrame = 180.0;
constexpr double kMaxTiltDegrees = 10.0;

std::uint8_t clamp_level(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

ImageRGB gradient_image(std::size_t side, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> tilt(-kMaxTiltDegrees, kMaxTiltDegrees);
  std::uniform_real_distribution<double> offset(-12.0, 12.0);
  std::uniform_real_distribution<double> blue(40.0, 215.0);
  std::uniform_int_distribution<int> noise(-6, 6);
  const double theta = tilt(rng) * std::numbers::pi / 180.0;
  const double r0 = 128.0 + offset(rng);
  const double g0 = 128.0 + offset(rng);
  const double b0 = blue(rng);
  const double slope = kRampLevelsPerFrame / static_cast<double>(side);
  const double c = (static_cast<double>(side) - 1.0) / 2.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  ImageRGB img(side, side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
      const double u = dx * ct + dy * st;
      const double v = -dx * st + dy * ct;
      img.at(y, x, 0) = clamp_level(r0 + slope * u);
      img.at(y, x, 1) = clamp_level(g0 + slope * v);
      img.at(y, x, 2) = clamp_level(b0 + noise(rng));
    }
  return img;
}

ImageRGB checker_image(std::size_t side, std::mt19937_64& rng) {
  const std::size_t min_period = std::max<std::size_t>(2, side / 16);
  std::uniform_int_distribution<std::size_t> period_dist(min_period, std::max(min_period, side / 5));
  const std::size_t period = period_dist(rng);
  std::uniform_int_distribution<std::size_t> phase(0, 2 * period - 1);
  const std::size_t py = phase(rng), px = phase(rng);
  std::uniform_int_distribution<int> level(0, 255);
  std::uint8_t colors[2][3];
  for (auto& color : colors)
    for (auto& ch : color) ch = static_cast<std::uint8_t>(level(rng));
  ImageRGB img(side, side);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const std::size_t which = ((y + py) / period + (x + px) / period) % 2;
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = colors[which][ch];
    }
  return img;
}

ImageRGB blobs_image(std::size_t side, std::mt19937_64& rng) {
  const double s = static_cast<double>(side);
  std::uniform_real_distribution<double> level(0.0, 255.0);
  std::uniform_real_distribution<double> pos(0.0, s);
  std::uniform_real_distribution<double> sigma(s / 12.0, s / 4.0);
  std::vector<double> canvas(side * side * 3);
  const double bg[3] = {level(rng), level(rng), level(rng)};
  for (std::size_t i = 0; i < canvas.size(); ++i) canvas[i] = bg[i % 3];
  for (int k = 0; k < 6; ++k) {
    const double cy = pos(rng), cx = pos(rng), sg = sigma(rng);
    const double color[3] = {level(rng), level(rng), level(rng)};
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double a = std::exp(-d2 / (2.0 * sg * sg));
        for (std::size_t ch = 0; ch < 3; ++ch) {
          double& v = canvas[(y * side + x) * 3 + ch];
          v = v * (1.0 - a) + color[ch] * a;
        }
      }
  }
  ImageRGB img(side, side);
  for (std::size_t i = 0; i < canvas.size(); ++i) img.pixels[i] = clamp_level(canvas[i]);
  return img;
}

}  // namespace

ImageRGB generate_one(const SyntheticSpec& spec, std::size_t index) {
  if (spec.frame_side == 0) throw ContractError("synthetic: frame_side must be positive");
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  switch (spec.kind) {
    case SyntheticKind::Gradient: return gradient_image(spec.frame_side, rng);
    case SyntheticKind::Checker: return checker_image(spec.frame_side, rng);
    case SyntheticKind::Blobs: return blobs_image(spec.frame_side, rng);
  }
  throw ContractError("synthetic: unknown kind");
}

std::vector<ImageRGB> generate(const SyntheticSpec& spec) {
  if (spec.count == 0) throw ContractError("synthetic: count must be at least 1");
  std::vector<ImageRGB> images;
  images.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) images.push_back(generate_one(spec, i));
  return images;
}

PairPredictor mean_color_predictor(const SamplerConfig& cfg) {
  const double step = static_cast<double>(cfg.fragment_side + cfg.gap) * kRampLevelsPerFrame /
                      static_cast<double>(cfg.frame_side);
  const double threshold = step / 2.0;
  return [threshold](std::span<const Fragment* const> centrals,
                     std::span<const Fragment* const> neighbors) {
    const auto mean = [](const Fragment& f, std::size_t channel) {
      double total = 0.0;
      std::span<const float> px = f.pixels.values();
      for (std::size_t i = channel; i < px.size(); i += 3) total += (px[i] + 1.0) * 127.5;
      return total / static_cast<double>(px.size() / 3);
    };
    const auto axis = [threshold](double delta) -> std::size_t {
      if (delta > threshold) return 2;
      if (delta < -threshold) return 0;
      return 1;
    };
    std::vector<LocationDistribution> out(neighbors.size());
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
      const double dr = mean(*neighbors[i], 0) - mean(*centrals[i], 0);
      const double dg = mean(*neighbors[i], 1) - mean(*centrals[i], 1);
      Cell cell{axis(dg), axis(dr)};
      if (cell == kCenterCell) {
        // Below threshold on both axes: take the dominant one.
        if (std::abs(dr) >= std::abs(dg)) {
          cell.col = dr >= 0 ? 2 : 0;
        } else {
          cell.row = dg >= 0 ? 2 : 0;
        }
      }
      out[i].fill(0.0);
      out[i][label_of(cell).index()] = 1.0;
    }
    return out;
  };
}

}  // namespace fragnet
