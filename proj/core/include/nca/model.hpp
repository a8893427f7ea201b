#pragma once

#include <Eigen/Core>

#include <array>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "nca/grid.hpp"

namespace nca {

template <class Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Weights of the per-cell update network: perception -> dense(hidden, relu)
/// -> dense(16). Both layers are 1x1 convolutions over the grid.
template <class Real>
struct ModelParams {
  Matrix<Real> w1;  // perception_size x hidden_size
  Vector<Real> b1;  // hidden_size
  Matrix<Real> w2;  // hidden_size x 16
  Vector<Real> b2;  // 16

  int perception_size() const noexcept { return static_cast<int>(w1.rows()); }
  int hidden_size() const noexcept { return static_cast<int>(w1.cols()); }
  std::size_t parameter_count() const noexcept {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
  }

  static ModelParams zeros(int perception_size, int hidden_size);
  /// Glorot-uniform first layer; zero biases and zero second layer so the
  /// untrained rule leaves the seed unchanged.
  static ModelParams initialize(int perception_size, int hidden_size, Rng& rng);

  void validate() const;
  bool all_finite() const;

  /// Named flat views over the four arrays, in the order w1, b1, w2, b2.
  std::array<std::pair<std::string_view, std::span<Real>>, 4> blocks();
  std::array<std::pair<std::string_view, std::span<const Real>>, 4> blocks() const;

  template <class To>
  ModelParams<To> cast() const {
    return {w1.template cast<To>(), b1.template cast<To>(), w2.template cast<To>(),
            b2.template cast<To>()};
  }

  bool operator==(const ModelParams& other) const {
    return w1 == other.w1 && b1 == other.b1 && w2 == other.w2 && b2 == other.b2;
  }
};

struct StepConfig {
  double fire_rate = 0.5;
  void validate() const;
};

/// Per-cell Bernoulli(fire_rate) draws, consumed in row-major order.
CellMask sample_fire_mask(int height, int width, double fire_rate, Rng& rng);

/// Perception for every cell: [identity | sobel_x | sobel_y], each block one
/// value per channel. Rows are cells in row-major order. Sobel kernels are the
/// unscaled 3x3 kernels with zero padding; x runs along columns, y along rows.
template <class Real>
Matrix<Real> perceive(const BasicGrid<Real>& grid);

/// Row-wise w2^T relu(w1^T p + b1) + b2.
template <class Real>
Matrix<Real> update_delta(const Matrix<Real>& perception, const ModelParams<Real>& params);

/// One stochastic update with an explicit fire mask.
template <class Real>
BasicGrid<Real> step(const BasicGrid<Real>& grid, const ModelParams<Real>& params,
                     const CellMask& fire);

template <class Real>
BasicGrid<Real> step(const BasicGrid<Real>& grid, const ModelParams<Real>& params,
                     const StepConfig& config, Rng& rng);

struct SignalEvent {
  Cell position;
  int jitter_radius = 0;
};

/// Applied immediately before step `time` (0-based).
struct ScheduledEvent {
  int time = 0;
  std::variant<SignalEvent, DamageMask> action;
};

using Schedule = std::vector<ScheduledEvent>;

/// Throws std::out_of_range when an event falls outside [0, steps).
void validate_schedule(const Schedule& schedule, int steps);

/// Steps a single organism forward. Environment signals last exactly one
/// step: the channel is cleared after every update.
template <class Real>
class Simulation {
 public:
  Simulation(BasicGrid<Real> state, const ModelParams<Real>& params, StepConfig config,
             Rng rng);

  void step();
  void advance(int steps);
  Cell signal(Cell position, int jitter_radius = 0);
  std::size_t damage(const DamageMask& mask) { return apply_damage(state_, mask); }

  const BasicGrid<Real>& state() const noexcept { return state_; }
  BasicGrid<Real>& state() noexcept { return state_; }
  int time() const noexcept { return time_; }
  Rng& rng() noexcept { return rng_; }

 private:
  BasicGrid<Real> state_;
  const ModelParams<Real>* params_;
  StepConfig config_;
  Rng rng_;
  int time_ = 0;
};

/// Runs `steps` updates, applying scheduled events before the matching step.
/// Returns every state (steps + 1 grids) when record_all is set, otherwise
/// just the first and last.
template <class Real>
std::vector<BasicGrid<Real>> rollout(const BasicGrid<Real>& seed, const ModelParams<Real>& params,
                                     int steps, const Schedule& schedule,
                                     const StepConfig& config, Rng& rng,
                                     bool record_all = false);

/// Applies the events scheduled for `time`: damage first, then signals.
/// Shared by rollout and the recording forward pass so both consume the rng
/// identically.
template <class Real>
std::vector<int> apply_events(BasicGrid<Real>& grid, const Schedule& schedule, int time, Rng& rng);

namespace detail {

/// What the backward pass needs from one forward step.
template <class Real>
struct StepRecord {
  BasicGrid<Real> input;
  CellMask fire;
  CellMask life;
  std::vector<int> life_cells;     // flat cell indices, ascending
  Matrix<Real> perception;         // one row per life cell
  Matrix<Real> hidden;             // relu activations, one row per life cell
  std::vector<int> damaged_cells;  // erased right before this step
};

/// The update rule. With `frozen_life` set the alive test is skipped and the
/// given mask is used as pre AND post mask. `record` is filled when non-null.
template <class Real>
BasicGrid<Real> step_kernel(const BasicGrid<Real>& grid, const ModelParams<Real>& params,
                            const CellMask& fire, const CellMask* frozen_life,
                            StepRecord<Real>* record);

}  // namespace detail

}  // namespace nca
