#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace splatdrive {

/// Row-major interleaved image of doubles. Color images use three channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

/// Binary P6 (3 channels) or P5 (1 channel), 8 bits, values clamped to [0,1]
/// and rounded to the nearest of 256 levels.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// 32-bit little-endian PFM ("Pf" gray / "PF" color), rows stored bottom-up.
void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);

/// 8-bit quantization used by write_ppm, exposed for round-trip checks.
std::uint8_t quantize8(double v);

}  // namespace splatdrive
