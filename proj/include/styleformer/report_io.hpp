#pragma once

// File outputs: 8-bit PNG, a raw float64 dump, image grids and attention
// heatmaps.
//
// Raw dump layout (all little-endian):
//   bytes 0..7   magic "SFRAW\0\0\1"
//   u64 height, u64 width, u64 channels
//   height * width * channels float64 values in (y, x, c) order

#include <cstdint>
#include <string>
#include <vector>

#include "styleformer/tensor.hpp"

namespace styleformer {

/// Maps [-1, 1] to [0, 255] (round half up, clamped). 1 or 3 channels.
std::vector<std::uint8_t> to_rgb8(const FeatureMap<double>& image);

/// 8-bit RGB PNG. Single-channel maps are written as grey.
void write_png(const std::string& path, const FeatureMap<double>& image);

struct Rgb8Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};
Rgb8Image read_png(const std::string& path);

void write_raw(const std::string& path, const FeatureMap<double>& image);
FeatureMap<double> read_raw(const std::string& path);

template <class T>
FeatureMap<double> to_double(const FeatureMap<T>& image) {
  FeatureMap<double> out(image.height, image.width, image.channels);
  std::copy(image.data.begin(), image.data.end(), out.data.begin());
  return out;
}

/// Cells laid out row by row with `pad` pixels of background (value -1)
/// between and around them. Empty cells (no data) stay background. All
/// non-empty cells must share one shape.
FeatureMap<double> compose_grid(const std::vector<std::vector<FeatureMap<double>>>& cells,
                                std::size_t pad = 2);

/// Colour-maps a side x side map whose entries sum to 1 (checked to 1e-6,
/// else NumericError). Values are scaled by the map maximum onto a
/// black-red-yellow-white ramp in [-1, 1]; returns the pre-colormap sum.
FeatureMap<double> heatmap_image(const Tensor<double>& map, double* sum = nullptr);

/// Nearest-neighbour enlargement so small maps remain visible.
FeatureMap<double> enlarge(const FeatureMap<double>& image, std::size_t factor);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace styleformer
