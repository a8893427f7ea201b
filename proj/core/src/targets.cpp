#include "nca/targets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nca {
namespace {

constexpr int kSuper = 4;

struct Box {
  double u0, v0, u1, v1;
  bool contains(double u, double v) const { return u >= u0 && u <= u1 && v >= v0 && v <= v1; }
};

bool in_ellipse(double u, double v, double cu, double cv, double ru, double rv) {
  const double a = (u - cu) / ru;
  const double b = (v - cv) / rv;
  return a * a + b * b <= 1.0;
}

// Leg geometry in unit coordinates (u right, v down, box spans [-1, 1]).
// Each leg is an upper arm leaving the body sideways plus a forearm bent
// toward the head (front legs) or the tail (back legs).
std::array<Box, 2> leg_parts(Leg leg) {
  const bool front = leg == Leg::front_left || leg == Leg::front_right;
  const double side = (leg == Leg::front_left || leg == Leg::back_left) ? -1.0 : 1.0;
  const Box arm = front ? Box{0.12, -0.42, 0.64, -0.20} : Box{0.12, 0.12, 0.64, 0.34};
  const Box fore = front ? Box{0.42, -0.70, 0.64, -0.20} : Box{0.42, 0.12, 0.64, 0.62};
  auto mirror = [side](Box b) {
    if (side > 0) return b;
    return Box{-b.u1, b.v0, -b.u0, b.v1};
  };
  return {mirror(arm), mirror(fore)};
}

Box leg_extent(Leg leg) {
  const auto parts = leg_parts(leg);
  return {std::min(parts[0].u0, parts[1].u0), std::min(parts[0].v0, parts[1].v0),
          std::max(parts[0].u1, parts[1].u1), std::max(parts[0].v1, parts[1].v1)};
}

bool inside_heart(double u, double v) {
  const double x = u * 1.2;
  const double y = -v * 1.2 + 0.125;
  const double s = x * x + y * y - 1.0;
  return s * s * s - x * x * y * y * y <= 0.0;
}

bool inside_gecko(double u, double v, const LegSet& legs) {
  if (in_ellipse(u, v, 0.0, -0.72, 0.20, 0.22)) return true;  // head
  if (in_ellipse(u, v, 0.0, -0.08, 0.22, 0.50)) return true;  // body
  if (v >= 0.35 && v <= 0.96) {                                 // tail
    const double half = 0.13 * (0.96 - v) / 0.61 + 0.03;
    if (std::abs(u) <= half) return true;
  }
  for (int i = 0; i < 4; ++i) {
    const Leg leg = static_cast<Leg>(i);
    if (!legs.has(leg)) continue;
    for (const Box& part : leg_parts(leg)) {
      if (part.contains(u, v)) return true;
    }
  }
  return false;
}

bool inside(const GlyphSpec& spec, double u, double v) {
  switch (spec.kind) {
    case GlyphKind::heart:
      return inside_heart(u, v);
    case GlyphKind::gecko:
      return inside_gecko(u, v, spec.legs);
    case GlyphKind::square:
      return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
  }
  return false;
}

// Exact for multiples of 90 degrees so that symmetric rotations reproduce
// pixel-exact mirrors.
std::pair<double, double> cos_sin(double degrees) {
  const double turns = degrees / 90.0;
  if (turns == std::round(turns)) {
    switch (((static_cast<long>(std::round(turns)) % 4) + 4) % 4) {
      case 0: return {1.0, 0.0};
      case 1: return {0.0, 1.0};
      case 2: return {-1.0, 0.0};
      default: return {0.0, -1.0};
    }
  }
  const double rad = degrees * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

std::string color_name(int gene) {
  static const char* names[] = {"red", "green", "blue"};
  return names[gene];
}

Rgb color_for(int gene) {
  static const Rgb colors[] = {kRed, kGreen, kBlue};
  return colors[gene];
}

}  // namespace

bool TargetImage::premultiplied() const {
  for (std::size_t i = 0; i + 3 < rgba.size(); i += 4) {
    for (int k = 0; k < 3; ++k) {
      if (rgba[i + k] > rgba[i + 3] || rgba[i + k] < 0.f) return false;
    }
    if (rgba[i + 3] < 0.f || rgba[i + 3] > 1.f) return false;
  }
  return true;
}

bool LegSet::has(Leg leg) const {
  switch (leg) {
    case Leg::front_left: return front_left;
    case Leg::front_right: return front_right;
    case Leg::back_left: return back_left;
    case Leg::back_right: return back_right;
  }
  return false;
}

RasterLayout RasterLayout::for_grid(int height, int width) {
  return {height, width, std::min(height, width) * 7 / 10};
}

TargetImage glyph(const GlyphSpec& spec, const RasterLayout& layout, std::string id) {
  if (!(spec.size_scale > 0.0 && spec.size_scale <= 1.0)) {
    throw std::invalid_argument("glyph size_scale must lie in (0, 1]");
  }
  if (layout.box <= 0 || layout.box > std::min(layout.height, layout.width)) {
    throw std::invalid_argument("glyph box must fit inside the raster");
  }
  TargetImage image(std::move(id), layout.height, layout.width);
  const auto [cs, sn] = cos_sin(spec.rotation_deg);
  const double half_box = layout.box / 2.0;
  const double cx = layout.width / 2.0;
  const double cy = layout.height / 2.0;
  for (int r = 0; r < layout.height; ++r) {
    for (int c = 0; c < layout.width; ++c) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double x = c + (sx + 0.5) / kSuper;
          const double y = r + (sy + 0.5) / kSuper;
          const double u = (x - cx) / half_box;
          const double v = (y - cy) / half_box;
          // Undo the rotation, then the scaling.
          const double bu = (u * cs + v * sn) / spec.size_scale;
          const double bv = (-u * sn + v * cs) / spec.size_scale;
          if (inside(spec, bu, bv)) ++hits;
        }
      }
      const float alpha = static_cast<float>(hits) / (kSuper * kSuper);
      image.at(r, c, 0) = static_cast<float>(spec.color.r) * alpha;
      image.at(r, c, 1) = static_cast<float>(spec.color.g) * alpha;
      image.at(r, c, 2) = static_cast<float>(spec.color.b) * alpha;
      image.at(r, c, 3) = alpha;
    }
  }
  return image;
}

PixelRect gecko_leg_bounds(Leg leg, const RasterLayout& layout) {
  const Box b = leg_extent(leg);
  const double half_box = layout.box / 2.0;
  const double cx = layout.width / 2.0;
  const double cy = layout.height / 2.0;
  PixelRect rect;
  rect.col0 = std::max(0, static_cast<int>(std::floor(cx + b.u0 * half_box)));
  rect.col1 = std::min(layout.width, static_cast<int>(std::ceil(cx + b.u1 * half_box)));
  rect.row0 = std::max(0, static_cast<int>(std::floor(cy + b.v0 * half_box)));
  rect.row1 = std::min(layout.height, static_cast<int>(std::ceil(cy + b.v1 * half_box)));
  return rect;
}

TargetImage target_from_rgba8(const Rgba8Image& image, const RasterLayout& layout,
                              std::string id) {
  if (image.height > layout.height || image.width > layout.width) {
    throw std::invalid_argument("image " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + " is larger than the grid");
  }
  TargetImage target(std::move(id), layout.height, layout.width);
  const int top = (layout.height - image.height) / 2;
  const int left = (layout.width - image.width) / 2;
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      const std::uint8_t* px = image.pixel(r, c);
      const float alpha = px[3] / 255.f;
      for (int k = 0; k < 3; ++k) target.at(top + r, left + c, k) = px[k] / 255.f * alpha;
      target.at(top + r, left + c, 3) = alpha;
    }
  }
  return target;
}

TargetImage load_image(const std::filesystem::path& path, const RasterLayout& layout,
                       std::string id) {
  if (id.empty()) id = path.stem().string();
  return target_from_rgba8(read_png(path), layout, std::move(id));
}

Rgba8Image target_to_rgba8(const TargetImage& target) {
  Rgba8Image image(target.height, target.width);
  for (int r = 0; r < target.height; ++r) {
    for (int c = 0; c < target.width; ++c) {
      std::uint8_t* px = image.pixel(r, c);
      const double alpha = std::clamp<double>(target.at(r, c, 3), 0.0, 1.0);
      for (int k = 0; k < 3; ++k) {
        const double straight = alpha > 0 ? std::clamp(target.at(r, c, k) / alpha, 0.0, 1.0) : 0.0;
        px[k] = static_cast<std::uint8_t>(std::lround(straight * 255.0));
      }
      px[3] = static_cast<std::uint8_t>(std::lround(alpha * 255.0));
    }
  }
  return image;
}

FamilyLookup TargetFamily::lookup(const Genome& genome) const {
  for (const auto& member : members) {
    if (member.genome == genome) return {true, member.target_id};
  }
  return {false, {}};
}

const TargetImage& TargetFamily::image(const std::string& id) const {
  auto it = images.find(id);
  if (it == images.end()) throw std::out_of_range("unknown target '" + id + "'");
  return it->second;
}

const TargetImage& TargetFamily::target_for(const Genome& genome) const {
  const FamilyLookup found = lookup(genome);
  if (!found.in_training) {
    throw std::out_of_range("out-of-training genome " + genome.to_string());
  }
  return image(found.target_id);
}

TargetFamily shape_color_family(const RasterLayout& layout, const std::vector<int>& color_genes) {
  TargetFamily family;
  family.name = "shape-color";
  family.genome_len = 4;
  for (int shape = 0; shape < 2; ++shape) {
    for (int gene : color_genes) {
      if (gene < 0 || gene > 2) throw std::invalid_argument("colour gene must be 0, 1 or 2");
      Genome genome{{static_cast<double>(shape), 0.0, 0.0, 0.0}};
      genome.bits[1 + gene] = 1.0;
      GlyphSpec spec;
      spec.kind = shape == 1 ? GlyphKind::heart : GlyphKind::gecko;
      spec.color = color_for(gene);
      const std::string id = std::string(shape == 1 ? "heart-" : "gecko-") + color_name(gene);
      family.images.emplace(id, glyph(spec, layout, id));
      family.members.push_back({genome, id});
    }
  }
  return family;
}

TargetFamily family_from_table(GenomeTable table, const RasterLayout& layout) {
  if (table == GenomeTable::shape_color) return shape_color_family(layout, {0, 1, 2});
  TargetFamily family;
  family.name = "gecko-legs";
  family.genome_len = 4;
  for (int code = 0; code < 16; ++code) {
    Genome genome{{0, 0, 0, 0}};
    for (int bit = 0; bit < 4; ++bit) genome.bits[bit] = (code >> (3 - bit)) & 1 ? 1.0 : 0.0;
    GlyphSpec spec;
    spec.kind = GlyphKind::gecko;
    spec.color = kGreen;
    spec.legs = {genome.bits[0] == 1.0, genome.bits[1] == 1.0, genome.bits[2] == 1.0,
                 genome.bits[3] == 1.0};
    const std::string id = "gecko-legs-" + genome.to_string();
    family.images.emplace(id, glyph(spec, layout, id));
    family.members.push_back({genome, id});
  }
  return family;
}

TargetFamily family_from_mapping(std::string name, int genome_len,
                                 std::vector<std::pair<Genome, TargetImage>> mapping) {
  TargetFamily family;
  family.name = std::move(name);
  family.genome_len = genome_len;
  for (auto& [genome, image] : mapping) {
    if (genome.size() != static_cast<std::size_t>(genome_len)) {
      throw std::invalid_argument("genome " + genome.to_string() + " has the wrong length");
    }
    if (family.lookup(genome).in_training) {
      throw std::invalid_argument("genome " + genome.to_string() + " mapped twice");
    }
    family.members.push_back({genome, image.id});
    family.images.emplace(image.id, std::move(image));
  }
  if (family.members.empty()) throw std::invalid_argument("empty target family");
  return family;
}

}  // namespace nca
