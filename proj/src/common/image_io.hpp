#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace s3d {

/// 8-bit grayscale raster, row-major with row 0 at the top.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Any PNG colour type is converted to 8-bit gray. Throws FormatError.
GrayImage decode_png(std::span<const std::uint8_t> bytes);
GrayImage read_png(const std::string& path);

std::vector<std::uint8_t> encode_png(const GrayImage& image);
void write_png(const std::string& path, const GrayImage& image);

/// Values in [0,1] to 0..255 with rounding; values outside are clamped.
GrayImage to_gray_image(std::span<const double> values, int width, int height);

}  // namespace s3d
