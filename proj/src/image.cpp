#include "fragnet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace fragnet {

ImageRGB::ImageRGB(std::size_t w, std::size_t h) : ImageRGB(w, h, std::vector<std::uint8_t>(w * h * 3, 0)) {}

ImageRGB::ImageRGB(std::size_t w, std::size_t h, std::vector<std::uint8_t> data)
    : width(w), height(h), pixels(std::move(data)) {
  if (w == 0 || h == 0) throw ContractError("image must have positive width and height");
  if (pixels.size() != 3 * w * h) {
    throw ContractError("image of " + std::to_string(w) + "x" + std::to_string(h) + " needs " +
                        std::to_string(3 * w * h) + " bytes, got " + std::to_string(pixels.size()));
  }
}

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::size_t offset() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1u << 24)) throw DecodeError(std::string("PPM ") + field + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw DecodeError(std::string("PPM header: expected ") + field, start);
    return value;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw DecodeError("PPM header: expected whitespace before pixel data", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

}  // namespace

ImageRGB decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw DecodeError("not a binary PPM: magic must be P6", 0);
  }
  HeaderReader reader(bytes, 2);
  const std::size_t width = reader.number("width");
  const std::size_t height = reader.number("height");
  reader.skip_space_and_comments();
  const std::size_t maxval_offset = reader.offset();
  const std::size_t maxval = reader.number("maxval");
  if (width == 0 || height == 0) throw DecodeError("PPM has a zero dimension", 2);
  if (maxval != 255) {
    throw DecodeError("PPM maxval " + std::to_string(maxval) + " unsupported, expected 255",
                      maxval_offset);
  }
  reader.single_whitespace();
  const std::size_t data_offset = reader.offset();
  const std::size_t expected = width * height * 3;
  const std::size_t available = bytes.size() - data_offset;
  if (available < expected) {
    throw DecodeError("PPM payload truncated: expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(available),
                      bytes.size());
  }
  std::vector<std::uint8_t> pixels(bytes.begin() + data_offset,
                                   bytes.begin() + data_offset + expected);
  return ImageRGB(width, height, std::move(pixels));
}

std::vector<std::uint8_t> encode_ppm(const ImageRGB& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

ImageRGB read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_ppm(const std::filesystem::path& path, const ImageRGB& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::vector<std::uint8_t> bytes = encode_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ImageRGB resize_square_crop(const ImageRGB& image, std::size_t side) {
  if (side == 0) throw ContractError("resize_square_crop: side must be at least 1");
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3) {
    throw ContractError("resize_square_crop: degenerate input image");
  }
  const double shorter = static_cast<double>(std::min(image.width, image.height));
  const double factor = static_cast<double>(side) / shorter;
  const auto scaled = [&](std::size_t extent) {
    if (extent == std::min(image.width, image.height)) return side;
    return std::max(side, static_cast<std::size_t>(std::lround(extent * factor)));
  };
  const std::size_t scaled_w = scaled(image.width);
  const std::size_t scaled_h = scaled(image.height);
  const std::size_t off_x = (scaled_w - side) / 2;
  const std::size_t off_y = (scaled_h - side) / 2;
  // Per-axis scale keeps the identity case exact.
  const double sx = static_cast<double>(image.width) / scaled_w;
  const double sy = static_cast<double>(image.height) / scaled_h;

  const auto source = [](double dst, double s, std::size_t extent, std::size_t& i0, std::size_t& i1,
                         double& t) {
    double pos = (dst + 0.5) * s - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, extent - 1);
    t = pos - static_cast<double>(i0);
  };

  ImageRGB out(side, side);
  for (std::size_t y = 0; y < side; ++y) {
    std::size_t y0, y1;
    double ty;
    source(static_cast<double>(y + off_y), sy, image.height, y0, y1, ty);
    for (std::size_t x = 0; x < side; ++x) {
      std::size_t x0, x1;
      double tx;
      source(static_cast<double>(x + off_x), sx, image.width, x0, x1, tx);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(y0, x0, c) * (1 - tx) + image.at(y0, x1, c) * tx;
        const double bottom = image.at(y1, x0, c) * (1 - tx) + image.at(y1, x1, c) * tx;
        const double v = top * (1 - ty) + bottom * ty;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Tensor to_model_range(const ImageRGB& image) {
  std::vector<float> values(image.pixels.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<float>(image.pixels[i]) / 127.5f - 1.0f;
  }
  return Tensor({image.height, image.width, 3}, std::move(values));
}

std::uint8_t from_model_range(float value) {
  const long v = std::lround((static_cast<double>(value) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
}

}  // namespace fragnet
