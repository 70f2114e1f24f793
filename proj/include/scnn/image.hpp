#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "scnn/tensor.hpp"

namespace scnn {

/// Three-channel image, row-major H x W x 3, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w * 3, fill) {}

  static constexpr std::size_t channels = 3;

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

bool pixels_in_unit_range(const Image& image);

Tensor to_tensor(const Image& image);

/// Binary PPM (P6). 8- and 16-bit maxvals are accepted; header comments skipped.
Image read_ppm(const std::filesystem::path& path);
Image decode_ppm(std::span<const std::uint8_t> bytes);
/// Writes 8-bit P6, rounding each value to the nearest of 256 levels.
void write_ppm(const std::filesystem::path& path, const Image& image);
std::vector<std::uint8_t> encode_ppm(const Image& image);

/// 8-bit binary graymap (P5).
void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> gray);

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace scnn
