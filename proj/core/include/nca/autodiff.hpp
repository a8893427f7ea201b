#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nca/grid.hpp"
#include "nca/model.hpp"

namespace nca {

/// Activations of an unrolled rollout, one record per step.
template <class Real>
struct Tape {
  std::vector<detail::StepRecord<Real>> steps;
  BasicGrid<Real> initial;
  BasicGrid<Real> final_state;

  std::size_t size() const noexcept { return steps.size(); }
};

template <class Real>
struct ParamGrads {
  Matrix<Real> dw1;
  Vector<Real> db1;
  Matrix<Real> dw2;
  Vector<Real> db2;

  static ParamGrads zeros_like(const ModelParams<Real>& params);

  ParamGrads& operator+=(const ParamGrads& other);
  ParamGrads& operator*=(Real scale);
  double squared_norm() const;
  bool all_finite() const;

  std::array<std::pair<std::string_view, std::span<Real>>, 4> blocks();
  std::array<std::pair<std::string_view, std::span<const Real>>, 4> blocks() const;
};

/// Gradient of a scalar loss w.r.t. the first 16 channels of a grid: one row
/// per cell (row-major), 16 columns.
template <class Real>
using StateGradient = Matrix<Real>;

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(int step)
      : std::runtime_error("non-finite gradient at step " + std::to_string(step)), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// Same computation and rng consumption as rollout(), keeping the tape.
/// steps == 0 is allowed and yields an empty tape.
template <class Real>
std::pair<BasicGrid<Real>, Tape<Real>> forward_recorded(const BasicGrid<Real>& seed,
                                                        const ModelParams<Real>& params,
                                                        int steps, const Schedule& schedule,
                                                        const StepConfig& config, Rng& rng);

/// Reverse pass. Fire and alive masks are constants of the recorded path.
/// Throws NonFiniteGradient naming the first failing step.
template <class Real>
ParamGrads<Real> backward(const Tape<Real>& tape, const ModelParams<Real>& params,
                          const StateGradient<Real>& loss_grad);

/// Re-runs the recorded path with `params`, reusing the recorded fire masks,
/// damage and environment input. With freeze_alive the recorded alive masks
/// are reused too; this is the function whose derivative backward() returns.
template <class Real>
BasicGrid<Real> replay(const Tape<Real>& tape, const ModelParams<Real>& params,
                       bool freeze_alive);

struct GradCheckOptions {
  double step_size = 1e-5;
  double tolerance = 1e-3;        // relative
  double abs_floor = 1e-12;       // below this magnitude compare absolutely
  double abs_tolerance = 1e-10;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::string worst_block;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares backward() against central differences of
/// 0.5 * sum((final[:16] - target)^2) for a random target drawn from `rng`,
/// evaluated in f64 with fire and alive masks frozen to the recorded ones.
/// `tamper` may alter the analytic gradient before comparison.
GradCheckReport grad_check(const CellGridF64& seed, const ModelParams<double>& params, int steps,
                           const StepConfig& config, Rng& rng,
                           const GradCheckOptions& options = {},
                           const std::function<void(ParamGrads<double>&)>& tamper = {});

}  // namespace nca
