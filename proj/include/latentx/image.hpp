#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace latentx {

/// 8-bit row-major image, 1 (gray) or 3 (RGB) interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int width, int height, int channels, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const Image&) const = default;
};

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

/// Stacks rows top to bottom and images left to right, separated by
/// gap_px of white. All images must share width, height and channels
/// (RaggedRow otherwise); short rows are padded with white.
Image compose_grid(const std::vector<std::vector<Image>>& rows, int gap_px);

}  // namespace latentx
