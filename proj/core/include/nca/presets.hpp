#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nca/checkpoint.hpp"
#include "nca/grid.hpp"
#include "nca/model.hpp"
#include "nca/targets.hpp"
#include "nca/training.hpp"

namespace nca {

/// A named experiment: grid layout, target family and default training
/// settings.
struct Preset {
  std::string name;
  std::string summary;
  GridConfig grid;
  TrainConfig train;
  TargetFamily family;
  std::optional<SignalSetup> signal;

  /// Family images plus the signal targets, keyed by id.
  std::map<std::string, const TargetImage*> targets() const;
};

std::vector<std::string> preset_names();

/// Builds a preset at the given grid size (0 keeps the preset default of
/// 40x40). Throws std::invalid_argument for unknown names.
Preset make_preset(const std::string& name, int height = 0, int width = 0);

/// Rebuilds the preset recorded in a checkpoint at the checkpoint's size.
Preset preset_for(const Checkpoint& checkpoint);

/// Checkpoint for a trained result, tagged with the preset name.
Checkpoint tag_checkpoint(Checkpoint checkpoint, const Preset& preset);

struct TargetLoss {
  std::string target_id;
  double loss = 0;
};

/// Loss of `state` against each target, in id order.
std::vector<TargetLoss> losses_against(const CellGrid& state,
                                       const std::map<std::string, const TargetImage*>& targets);
const TargetLoss& closest(const std::vector<TargetLoss>& losses);

/// Grows `genome` from a centered seed for `steps` updates.
CellGrid grow(const ModelParams<float>& params, const GridConfig& grid, const Genome& genome,
              int steps, double fire_rate, std::uint64_t seed);

}  // namespace nca
