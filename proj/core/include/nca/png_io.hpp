#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace nca {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit straight-alpha RGBA raster, row-major.
struct Rgba8Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 4

  Rgba8Image() = default;
  Rgba8Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 4, 0) {}

  std::uint8_t* pixel(int row, int col) { return pixels.data() + (static_cast<std::size_t>(row) * width + col) * 4; }
  const std::uint8_t* pixel(int row, int col) const {
    return pixels.data() + (static_cast<std::size_t>(row) * width + col) * 4;
  }
  bool operator==(const Rgba8Image&) const = default;
};

/// Any PNG color type is expanded to 8-bit RGBA.
Rgba8Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Rgba8Image& image);

}  // namespace nca
