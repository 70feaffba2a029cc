#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "episodica/tensor.hpp"

namespace episodica {

// CHW float image. Values live in [0,1] until normalized.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Replicates a single-channel image to three channels; 3-channel input is returned as is.
Image to_rgb(const Image& img);

/// Stacks equally sized images into a [n, c, h, w] tensor.
Tensor stack_images(std::span<const Image> images);

// Binary netpbm: P6 (RGB) and P5 (gray), maxval 255.
Image decode_netpbm(std::span<const std::uint8_t> bytes);
/// P6 for 3 channels, P5 for 1. Values are clamped to [0,1] and rounded to 8 bits.
std::vector<std::uint8_t> encode_netpbm(const Image& img);

Image load_ppm_pgm(const std::filesystem::path& path);
void save_ppm_pgm(const Image& img, const std::filesystem::path& path);

}  // namespace episodica
