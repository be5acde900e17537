#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spg/tensor.hpp"

namespace spg {

/// Binary PPM (P6, maxval 255) <-> (1,3,H,W) tensor with values in [0,1].
/// Values are clamped and rounded to the nearest 8-bit level on write.
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);
Tensor<float> read_ppm(const std::filesystem::path& path);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Binary PGM (P5, maxval 255); pixel values are stored raw.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace spg
