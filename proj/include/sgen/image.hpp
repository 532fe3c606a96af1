#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sgen/tensor.hpp"

namespace sgen {

/// 8-bit image with interleaved channels (row-major, HWC), as stored in
/// binary PGM (1 channel) and PPM (3 channels).
struct Image8 {
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int c, int h, int w)
      : channels(c), height(h), width(w),
        pixels(static_cast<std::size_t>(c) * h * w, 0) {}

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image8&) const = default;
};

/// Parses a binary P5/P6 file with maxval 255. Errors carry the byte offset.
Image8 decode_netpbm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_netpbm(const Image8& image);

Image8 load_image(const std::filesystem::path& path);
void save_image(const Image8& image, const std::filesystem::path& path);

/// (1, c, h, w) tensor with v' = v / 127.5 - 1.
Tensor to_tensor(const Image8& image);
/// Inverse normalization of batch item `item`, rounded and clamped to [0, 255].
Image8 to_image8(const Tensor& t, int item = 0);

}  // namespace sgen
