#pragma once

#include <filesystem>
#include <iosfwd>

#include "nca/grid.hpp"
#include "nca/png_io.hpp"

namespace nca {

/// Converts channels c0..c3 to an 8-bit straight-alpha raster. The state
/// stores premultiplied color, so RGB is divided by alpha before clamping.
template <class Real>
Rgba8Image to_rgba8(const BasicGrid<Real>& grid);

/// Channel dump: "NCAG", u32 height, u32 width, u32 channels (little endian),
/// then height*width*channels little-endian f32 values, channels innermost.
void write_channel_dump(std::ostream& out, const CellGrid& grid);
void write_channel_dump(const std::filesystem::path& path, const CellGrid& grid);

/// The genome length is not stored; the returned grid reports genome_len 0.
CellGrid read_channel_dump(std::istream& in);
CellGrid read_channel_dump(const std::filesystem::path& path);

}  // namespace nca
