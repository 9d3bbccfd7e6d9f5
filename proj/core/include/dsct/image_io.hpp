#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dsct/tensor.hpp"

namespace dsct {

/// Interleaved 8-bit RGB, row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;
};

// Reads binary PPM (P6, maxval 255) or 8-bit PNG, chosen by file signature.
Image8 read_image(const std::filesystem::path& path);

void write_ppm(const std::filesystem::path& path, const Image8& image);
void write_png(const std::filesystem::path& path, const Image8& image);
// PNG for a ".png" extension, PPM otherwise.
void write_image(const std::filesystem::path& path, const Image8& image);

// [3, H, W] with values v / 255.
Tensor<float> image_to_tensor(const Image8& image);

// Clips to [0, 1], scales by 255 and rounds half to even.
Image8 tensor_to_image(const Tensor<float>& frame);

}  // namespace dsct
