#include "nca/grid_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace nca {
namespace {

constexpr std::array<char, 4> kDumpMagic = {'N', 'C', 'A', 'G'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw ImageIoError("truncated channel dump");
  return std::uint32_t(bytes[0]) | (std::uint32_t(bytes[1]) << 8) |
         (std::uint32_t(bytes[2]) << 16) | (std::uint32_t(bytes[3]) << 24);
}

std::uint8_t to_byte(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

}  // namespace

template <class Real>
Rgba8Image to_rgba8(const BasicGrid<Real>& grid) {
  Rgba8Image image(grid.height(), grid.width());
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      const double alpha = std::clamp(static_cast<double>(grid.at(r, c, kAlphaChannel)), 0.0, 1.0);
      std::uint8_t* px = image.pixel(r, c);
      for (int k = 0; k < 3; ++k) {
        px[k] = alpha > 0.0 ? to_byte(grid.at(r, c, k) / alpha) : 0;
      }
      px[3] = to_byte(alpha);
    }
  }
  return image;
}

template Rgba8Image to_rgba8<float>(const BasicGrid<float>&);
template Rgba8Image to_rgba8<double>(const BasicGrid<double>&);

void write_channel_dump(std::ostream& out, const CellGrid& grid) {
  out.write(kDumpMagic.data(), kDumpMagic.size());
  put_u32(out, static_cast<std::uint32_t>(grid.height()));
  put_u32(out, static_cast<std::uint32_t>(grid.width()));
  put_u32(out, static_cast<std::uint32_t>(grid.channels()));
  for (float v : grid.data()) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw ImageIoError("failed writing channel dump");
}

void write_channel_dump(const std::filesystem::path& path, const CellGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot open " + path.string());
  write_channel_dump(out, grid);
}

CellGrid read_channel_dump(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kDumpMagic) {
    throw ImageIoError("not a channel dump (bad magic)");
  }
  GridConfig config;
  config.height = static_cast<int>(get_u32(in));
  config.width = static_cast<int>(get_u32(in));
  const auto channels = get_u32(in);
  if (channels != kStateChannels && channels != kStateChannels + 1) {
    throw ImageIoError("unsupported channel count " + std::to_string(channels));
  }
  config.env_enabled = channels == kStateChannels + 1;
  CellGrid grid(config);
  for (float& v : grid.data()) v = std::bit_cast<float>(get_u32(in));
  return grid;
}

CellGrid read_channel_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  return read_channel_dump(in);
}

}  // namespace nca
