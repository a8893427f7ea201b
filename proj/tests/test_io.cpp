#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "nca/grid_io.hpp"
#include "nca/png_io.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace nca;

TEST(Png, RoundTrip) {
  const TempDir dir;
  Rgba8Image img(5, 7);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 37);
  write_png(dir / "a.png", img);
  EXPECT_EQ(read_png(dir / "a.png"), img);
}

TEST(Png, RejectsNonPng) {
  const TempDir dir;
  {
    std::ofstream f(dir / "x.png");
    f << "definitely not a png";
  }
  EXPECT_THROW(read_png(dir / "x.png"), ImageIoError);
}

TEST(ToRgba8, StraightAlphaClamped) {
  GridConfig c;
  c.height = 1;
  c.width = 4;
  CellGrid g(c);
  // premultiplied half-transparent red
  g.at(0, 0, 0) = 0.5f;
  g.at(0, 0, 3) = 0.5f;
  // out of range values
  g.at(0, 1, 0) = 2.f;
  g.at(0, 1, 1) = -1.f;
  g.at(0, 1, 3) = 1.5f;
  // transparent cell with stray colour
  g.at(0, 2, 2) = 0.3f;
  // opaque grey
  for (int k = 0; k < 3; ++k) g.at(0, 3, k) = 0.25f;
  g.at(0, 3, 3) = 1.f;
  const Rgba8Image img = to_rgba8(g);
  const std::vector<std::uint8_t> expected = {255, 0,  0,  128, 255, 0,  0,  255,
                                              0,   0,  0,  0,   64,  64, 64, 255};
  EXPECT_EQ(img.pixels, expected);
}

TEST(ChannelDump, HeaderLayout) {
  GridConfig c;
  c.height = 2;
  c.width = 3;
  c.env_enabled = true;
  CellGrid g(c);
  g.at(0, 0, 0) = 1.0f;
  std::ostringstream out;
  write_channel_dump(out, g);
  const std::string bytes = out.str();
  ASSERT_EQ(bytes.size(), 16u + 2 * 3 * 17 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "NCAG");
  auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 3])) << 24;
  };
  EXPECT_EQ(u32(4), 2u);
  EXPECT_EQ(u32(8), 3u);
  EXPECT_EQ(u32(12), 17u);
  EXPECT_EQ(u32(16), 0x3f800000u);  // 1.0f little endian
}

TEST(ChannelDump, RoundTrip) {
  GridConfig c;
  c.height = 6;
  c.width = 5;
  c.env_enabled = true;
  const CellGrid g = oracle::random_grid(c, 3).cast<float>();
  const TempDir dir;
  write_channel_dump(dir / "g.bin", g);
  EXPECT_EQ(read_channel_dump(dir / "g.bin"), g);
}

TEST(ChannelDump, RejectsGarbage) {
  std::istringstream bad_magic("NCAX0000000000000000");
  EXPECT_THROW(read_channel_dump(bad_magic), ImageIoError);
  GridConfig c;
  c.height = 2;
  c.width = 2;
  std::ostringstream out;
  write_channel_dump(out, CellGrid(c));
  std::istringstream truncated(out.str().substr(0, 30));
  EXPECT_THROW(read_channel_dump(truncated), ImageIoError);
}
