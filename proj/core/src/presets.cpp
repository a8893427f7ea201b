#include "nca/presets.hpp"

#include <algorithm>
#include <stdexcept>

namespace nca {
namespace {

GridConfig grid_for(int height, int width, int genome_len, bool env) {
  GridConfig grid;
  grid.height = height;
  grid.width = width;
  grid.genome_len = genome_len;
  grid.env_enabled = env;
  return grid;
}

TargetImage heart(const RasterLayout& layout, const std::string& id, Rgb color, double scale,
                  double rotation) {
  GlyphSpec spec;
  spec.kind = GlyphKind::heart;
  spec.color = color;
  spec.size_scale = scale;
  spec.rotation_deg = rotation;
  return glyph(spec, layout, id);
}

}  // namespace

std::map<std::string, const TargetImage*> Preset::targets() const {
  std::map<std::string, const TargetImage*> out;
  for (const auto& [id, image] : family.images) out.emplace(id, &image);
  if (signal) {
    out.emplace(signal->base.id, &signal->base);
    out.emplace(signal->alt.id, &signal->alt);
  }
  return out;
}

std::vector<std::string> preset_names() {
  return {"plain-heart",   "heart-size", "heart-rotation", "four-organisms",
          "six-organisms", "gecko-legs", "signal-color"};
}

Preset make_preset(const std::string& name, int height, int width) {
  if (height <= 0) height = 40;
  if (width <= 0) width = 40;
  const RasterLayout layout = RasterLayout::for_grid(height, width);
  Preset p;
  p.name = name;
  if (name == "plain-heart") {
    p.summary = "single red heart, no genome";
    p.grid = grid_for(height, width, 0, false);
    p.family = family_from_mapping("plain-heart", 0,
                                   {{Genome{}, heart(layout, "heart", kRed, 1.0, 0.0)}});
  } else if (name == "heart-size") {
    p.summary = "c4=0 small heart, c4=1 large heart";
    p.grid = grid_for(height, width, 1, false);
    p.family = family_from_mapping("heart-size", 1,
                                   {{Genome{{0.0}}, heart(layout, "heart-small", kRed, 0.5, 0.0)},
                                    {Genome{{1.0}}, heart(layout, "heart-large", kRed, 1.0, 0.0)}});
  } else if (name == "heart-rotation") {
    p.summary = "c4=0 upright heart, c4=1 heart rotated 180 degrees";
    p.grid = grid_for(height, width, 1, false);
    p.family = family_from_mapping(
        "heart-rotation", 1,
        {{Genome{{0.0}}, heart(layout, "heart-upright", kRed, 1.0, 0.0)},
         {Genome{{1.0}}, heart(layout, "heart-rotated", kRed, 1.0, 180.0)}});
  } else if (name == "four-organisms") {
    p.summary = "heart/gecko x red/green on c4..c7";
    p.grid = grid_for(height, width, 4, false);
    p.family = shape_color_family(layout, {0, 1});
    p.family.name = "four-organisms";
  } else if (name == "six-organisms") {
    p.summary = "heart/gecko x red/green/blue on c4..c7";
    p.grid = grid_for(height, width, 4, false);
    p.family = family_from_table(GenomeTable::shape_color, layout);
    p.family.name = "six-organisms";
  } else if (name == "gecko-legs") {
    p.summary = "green gecko, c4..c7 gate the four legs";
    p.grid = grid_for(height, width, 4, false);
    p.family = family_from_table(GenomeTable::legs, layout);
  } else if (name == "signal-color") {
    p.summary = "green heart that toggles to red on every environment signal";
    p.grid = grid_for(height, width, 0, true);
    SignalSetup setup;
    setup.base = heart(layout, "heart-green", kGreen, 1.0, 0.0);
    setup.alt = heart(layout, "heart-red", kRed, 1.0, 0.0);
    setup.position = seed_position(p.grid);
    p.family = family_from_mapping("signal-color", 0, {{Genome{}, setup.base}});
    p.family.images.emplace(setup.alt.id, setup.alt);
    p.signal = std::move(setup);
    p.train.regime = Regime::signal;
    p.train.batch_size = 12;
    p.train.worst_replace = 3;
    p.train.steps_min = 64;
    p.train.steps_max = 128;
    p.train.signal_min_settled = 2;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return p;
}

Preset preset_for(const Checkpoint& checkpoint) {
  if (checkpoint.metadata.preset.empty()) {
    throw std::invalid_argument("checkpoint does not name a preset");
  }
  Preset p = make_preset(checkpoint.metadata.preset, checkpoint.grid.height, checkpoint.grid.width);
  if (p.grid.genome_len != checkpoint.grid.genome_len ||
      p.grid.env_enabled != checkpoint.grid.env_enabled) {
    throw std::invalid_argument("checkpoint layout does not match preset '" + p.name + "'");
  }
  return p;
}

Checkpoint tag_checkpoint(Checkpoint checkpoint, const Preset& preset) {
  checkpoint.metadata.preset = preset.name;
  return checkpoint;
}

std::vector<TargetLoss> losses_against(const CellGrid& state,
                                       const std::map<std::string, const TargetImage*>& targets) {
  std::vector<TargetLoss> out;
  out.reserve(targets.size());
  for (const auto& [id, image] : targets) out.push_back({id, rgba_loss(state, *image)});
  return out;
}

const TargetLoss& closest(const std::vector<TargetLoss>& losses) {
  if (losses.empty()) throw std::invalid_argument("no targets to compare against");
  return *std::min_element(losses.begin(), losses.end(),
                           [](const TargetLoss& a, const TargetLoss& b) { return a.loss < b.loss; });
}

CellGrid grow(const ModelParams<float>& params, const GridConfig& grid, const Genome& genome,
              int steps, double fire_rate, std::uint64_t seed) {
  CellGrid state = make_seed<float>(grid, genome, seed_position(grid));
  Simulation<float> sim(std::move(state), params, StepConfig{fire_rate}, Rng(seed));
  sim.advance(steps);
  return sim.state();
}

}  // namespace nca
