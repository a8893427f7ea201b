#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nca/grid.hpp"
#include "nca/png_io.hpp"

namespace nca {

/// Premultiplied RGBA target, values in [0, 1], channels innermost.
struct TargetImage {
  std::string id;
  int height = 0;
  int width = 0;
  std::vector<float> rgba;

  TargetImage() = default;
  TargetImage(std::string name, int h, int w)
      : id(std::move(name)), height(h), width(w), rgba(static_cast<std::size_t>(h) * w * 4, 0.f) {}

  float& at(int row, int col, int k) {
    return rgba[(static_cast<std::size_t>(row) * width + col) * 4 + k];
  }
  float at(int row, int col, int k) const {
    return rgba[(static_cast<std::size_t>(row) * width + col) * 4 + k];
  }
  /// True when every RGB value is bounded by its alpha.
  bool premultiplied() const;
  bool operator==(const TargetImage&) const = default;
};

struct Rgb {
  double r = 0;
  double g = 0;
  double b = 0;
};

inline constexpr Rgb kRed{0.90, 0.12, 0.12};
inline constexpr Rgb kGreen{0.15, 0.75, 0.20};
inline constexpr Rgb kBlue{0.15, 0.30, 0.90};

enum class GlyphKind { heart, gecko, square };

enum class Leg { front_left = 0, front_right = 1, back_left = 2, back_right = 3 };

struct LegSet {
  bool front_left = true;
  bool front_right = true;
  bool back_left = true;
  bool back_right = true;

  bool has(Leg leg) const;
};

/// Raster size and the square box the organism is drawn into (centered).
struct RasterLayout {
  int height = 40;
  int width = 40;
  int box = 28;

  /// box = 70% of the shorter side: 40 -> 28, 24 -> 16.
  static RasterLayout for_grid(int height, int width);
};

struct GlyphSpec {
  GlyphKind kind = GlyphKind::heart;
  Rgb color = kRed;
  double size_scale = 1.0;    // (0, 1]
  double rotation_deg = 0.0;  // clockwise on screen
  LegSet legs;                // gecko only
};

/// Deterministic 4x4-supersampled raster of a procedural glyph.
TargetImage glyph(const GlyphSpec& spec, const RasterLayout& layout, std::string id = {});

/// Pixel rectangle [row0, row1) x [col0, col1) that can be touched by one
/// gecko leg at size_scale 1 and no rotation.
struct PixelRect {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;
  bool contains(int row, int col) const {
    return row >= row0 && row < row1 && col >= col0 && col < col1;
  }
};
PixelRect gecko_leg_bounds(Leg leg, const RasterLayout& layout);

/// Loads an 8-bit RGBA PNG, premultiplies alpha and centers it on a
/// transparent canvas of the layout's size.
TargetImage load_image(const std::filesystem::path& path, const RasterLayout& layout,
                       std::string id = {});
TargetImage target_from_rgba8(const Rgba8Image& image, const RasterLayout& layout, std::string id);
Rgba8Image target_to_rgba8(const TargetImage& target);

struct FamilyMember {
  Genome genome;
  std::string target_id;
};

struct FamilyLookup {
  bool in_training = false;
  std::string target_id;  // empty for out-of-training genomes
};

/// Genome -> target mapping over a finite training domain.
struct TargetFamily {
  std::string name;
  int genome_len = 0;
  std::vector<FamilyMember> members;
  std::map<std::string, TargetImage> images;

  FamilyLookup lookup(const Genome& genome) const;
  const TargetImage& image(const std::string& id) const;
  /// Throws std::out_of_range for genomes outside the training domain.
  const TargetImage& target_for(const Genome& genome) const;
  std::size_t size() const noexcept { return members.size(); }
};

enum class GenomeTable {
  shape_color,  // c4 shape (0 gecko, 1 heart), c5..c7 one-hot red/green/blue
  legs,         // c4..c7 gate front-left, front-right, back-left, back-right
};

/// Builds the family for one of the two standard genome tables.
TargetFamily family_from_table(GenomeTable table, const RasterLayout& layout);

/// Shape/color table restricted to the listed colour genes (0 red, 1 green,
/// 2 blue); both shapes for each.
TargetFamily shape_color_family(const RasterLayout& layout, const std::vector<int>& color_genes);

/// User supplied mapping; ids are taken from the pairs.
TargetFamily family_from_mapping(std::string name, int genome_len,
                                 std::vector<std::pair<Genome, TargetImage>> mapping);

}  // namespace nca
