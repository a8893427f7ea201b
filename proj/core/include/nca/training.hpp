#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nca/autodiff.hpp"
#include "nca/checkpoint.hpp"
#include "nca/grid.hpp"
#include "nca/model.hpp"
#include "nca/targets.hpp"

namespace nca {

template <class Real>
struct LossValue {
  double value = 0;                         // mean over H*W*4 RGBA entries
  std::optional<std::vector<double>> per_pixel;  // mean over the 4 channels
  StateGradient<Real> grad;                 // d value / d state, zero on c4+
};

/// Mean squared error between channels c0..c3 and the premultiplied target.
template <class Real>
LossValue<Real> loss(const BasicGrid<Real>& state, const TargetImage& target,
                     bool per_pixel = false);

/// Just the scalar, without allocating a gradient.
template <class Real>
double rgba_loss(const BasicGrid<Real>& state, const TargetImage& target);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double normalize_epsilon = 1e-8;
};

/// Adam on gradients rescaled to unit global L2 norm.
template <class Real>
class Adam {
 public:
  explicit Adam(const ModelParams<Real>& shape, AdamConfig config = {});

  void update(ModelParams<Real>& params, const ParamGrads<Real>& grads, double learning_rate);
  std::int64_t step_count() const noexcept { return steps_; }

 private:
  AdamConfig config_;
  ParamGrads<Real> m_;
  ParamGrads<Real> v_;
  std::int64_t steps_ = 0;
};

enum class Regime { growing, persistent, regenerating, signal };

std::string to_string(Regime regime);
Regime parse_regime(const std::string& text);

struct TrainConfig {
  Regime regime = Regime::growing;
  int batch_size = 8;
  int pool_size = 256;
  int steps_min = 64;
  int steps_max = 96;
  int iterations = 2000;
  double learning_rate = 2e-3;
  int lr_decay_iteration = 0;  // 0 keeps the rate constant
  double lr_decay_factor = 0.1;
  double damage_fraction = 0.375;        // of the sampled entries that are kept
  int worst_replace = 1;                 // reseeded per iteration
  double signal_fraction = 1.0 / 3.0;    // of the kept entries
  double repeat_signal_fraction = 0;     // of the signalled entries: second signal mid-rollout
  int signal_min_settled = 0;            // rollouts an entry must have run since reseed or last signal
  int jitter_radius = 2;
  int hidden_size = 128;
  double fire_rate = 0.5;
  std::uint64_t seed = 1;
  int threads = 0;  // <= 0: worker_count()

  void validate() const;
};

struct IterationStats {
  int iteration = 0;
  int steps = 0;
  double mean_loss = 0;
  double min_loss = 0;
  double max_loss = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(int iteration)
      : std::runtime_error("training diverged at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

struct PoolEntry {
  CellGrid grid;
  Genome genome;
  std::string target_id;
  int signal_count = 0;
  int settled = 0;  // rollouts since reseed or the last signal
  double last_loss = 0;
};

/// Observer called after every optimizer update.
using IterationCallback = std::function<void(const IterationStats&, const ModelParams<float>&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<IterationStats> history;
  std::vector<PoolEntry> pool;  // empty for the growing regime
};

/// Seeds are placed at the grid center.
Cell seed_position(const GridConfig& grid);

/// Every iteration grows fresh seeds (genomes drawn uniformly from the
/// family) and trains on the batch-mean gradient.
TrainResult train_growing(const TargetFamily& family, const GridConfig& grid,
                          const TrainConfig& config, const IterationCallback& observer = {});

/// Persistent and regenerating regimes: batches are sampled from a pool of
/// partially grown organisms and written back after every iteration.
TrainResult train_pool(const TargetFamily& family, const GridConfig& grid,
                       const TrainConfig& config, const IterationCallback& observer = {});

struct SignalSetup {
  TargetImage base;
  TargetImage alt;
  Cell position;  // signals land within jitter_radius of this cell
};

/// Pool training where a signal toggles the target: even signal count ->
/// base, odd -> alt.
TrainResult train_signal(const SignalSetup& setup, const GridConfig& grid,
                         const TrainConfig& config, const IterationCallback& observer = {});

/// Dispatches on config.regime. The signal regime needs `signal`.
TrainResult train(const TargetFamily& family, const GridConfig& grid, const TrainConfig& config,
                  const std::optional<SignalSetup>& signal = std::nullopt,
                  const IterationCallback& observer = {});

/// One rollout + loss + backward per batch element; the mean gradient.
struct BatchSample {
  CellGrid start;
  const TargetImage* target = nullptr;
  Schedule schedule;
  std::uint64_t rng_seed = 0;
};

struct BatchOutcome {
  std::vector<CellGrid> finals;
  std::vector<double> losses;
  ParamGrads<float> mean_grads;
};

BatchOutcome run_batch(const std::vector<BatchSample>& samples, const ModelParams<float>& params,
                       int steps, double fire_rate, int threads = 0);

/// Circle with radius uniform in [min_side/8, min_side/4], centered uniformly
/// over the bounding box of cells with alpha above the alive threshold.
DamageMask random_damage(const CellGrid& grid, Rng& rng);

}  // namespace nca
