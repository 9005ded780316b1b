#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fragnet/tensor.hpp"

namespace fragnet {

// 8-bit RGB, row-major, channels interleaved.
struct ImageRGB {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ImageRGB() = default;
  ImageRGB(std::size_t w, std::size_t h);
  ImageRGB(std::size_t w, std::size_t h, std::vector<std::uint8_t> data);

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  bool operator==(const ImageRGB&) const = default;
};

// Binary P6 with maxval 255. Throws DecodeError carrying the byte offset.
ImageRGB decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const ImageRGB& image);

ImageRGB read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageRGB& image);

// Bilinear rescale so the shorter side equals `side`, then a centered
// side x side crop.
ImageRGB resize_square_crop(const ImageRGB& image, std::size_t side);

// v -> v / 127.5 - 1, as an [H, W, 3] tensor.
Tensor to_model_range(const ImageRGB& image);

// Inverse of to_model_range, rounded and clamped to [0, 255].
std::uint8_t from_model_range(float value);

}  // namespace fragnet
