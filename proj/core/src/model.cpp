#include "nca/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nca {
namespace {

// kSobelX[dr + 1][dc + 1]; kSobelY is its transpose.
constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

template <class Real>
void perceive_cell(const BasicGrid<Real>& grid, int row, int col, Real* out) {
  const int channels = grid.channels();
  Real* id = out;
  Real* sx = out + channels;
  Real* sy = out + 2 * channels;
  const Real* center = grid.cell(row, col).data();
  for (int k = 0; k < channels; ++k) {
    id[k] = center[k];
    sx[k] = Real(0);
    sy[k] = Real(0);
  }
  for (int dr = -1; dr <= 1; ++dr) {
    const int r = row + dr;
    if (r < 0 || r >= grid.height()) continue;
    for (int dc = -1; dc <= 1; ++dc) {
      const int c = col + dc;
      if (c < 0 || c >= grid.width()) continue;
      const Real kx = static_cast<Real>(kSobelX[dr + 1][dc + 1]);
      const Real ky = static_cast<Real>(kSobelY[dr + 1][dc + 1]);
      if (kx == Real(0) && ky == Real(0)) continue;
      const Real* v = grid.cell(r, c).data();
      for (int k = 0; k < channels; ++k) {
        sx[k] += kx * v[k];
        sy[k] += ky * v[k];
      }
    }
  }
}

template <class Real>
void check_shapes(const BasicGrid<Real>& grid, const ModelParams<Real>& params) {
  if (params.perception_size() != grid.config().perception_size()) {
    throw ShapeError("model expects perception size " +
                     std::to_string(params.perception_size()) + " but grid has " +
                     std::to_string(grid.channels()) + " channels");
  }
}

// Cells within Chebyshev distance 1 of a set cell.
CellMask dilate(const CellMask& mask) {
  CellMask out(mask.height, mask.width);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask(r, c)) continue;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr >= 0 && rr < mask.height && cc >= 0 && cc < mask.width) out.at(rr, cc) = 1;
        }
      }
    }
  }
  return out;
}

}  // namespace

template <class Real>
ModelParams<Real> ModelParams<Real>::zeros(int perception_size, int hidden_size) {
  if (perception_size <= 0 || hidden_size <= 0) throw ShapeError("layer sizes must be positive");
  return {Matrix<Real>::Zero(perception_size, hidden_size), Vector<Real>::Zero(hidden_size),
          Matrix<Real>::Zero(hidden_size, kStateChannels), Vector<Real>::Zero(kStateChannels)};
}

template <class Real>
ModelParams<Real> ModelParams<Real>::initialize(int perception_size, int hidden_size, Rng& rng) {
  ModelParams p = zeros(perception_size, hidden_size);
  const double limit = std::sqrt(6.0 / (perception_size + hidden_size));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = static_cast<Real>(dist(rng));
  return p;
}

template <class Real>
void ModelParams<Real>::validate() const {
  if (w1.rows() <= 0 || w1.cols() <= 0) throw ShapeError("empty first layer");
  if (b1.size() != w1.cols()) throw ShapeError("b1 length does not match hidden size");
  if (w2.rows() != w1.cols() || w2.cols() != kStateChannels) {
    throw ShapeError("w2 must be hidden_size x 16");
  }
  if (b2.size() != kStateChannels) throw ShapeError("b2 must have 16 entries");
}

template <class Real>
bool ModelParams<Real>::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

template <class Real>
std::array<std::pair<std::string_view, std::span<Real>>, 4> ModelParams<Real>::blocks() {
  return {{{"w1", {w1.data(), static_cast<std::size_t>(w1.size())}},
           {"b1", {b1.data(), static_cast<std::size_t>(b1.size())}},
           {"w2", {w2.data(), static_cast<std::size_t>(w2.size())}},
           {"b2", {b2.data(), static_cast<std::size_t>(b2.size())}}}};
}

template <class Real>
std::array<std::pair<std::string_view, std::span<const Real>>, 4> ModelParams<Real>::blocks()
    const {
  return {{{"w1", {w1.data(), static_cast<std::size_t>(w1.size())}},
           {"b1", {b1.data(), static_cast<std::size_t>(b1.size())}},
           {"w2", {w2.data(), static_cast<std::size_t>(w2.size())}},
           {"b2", {b2.data(), static_cast<std::size_t>(b2.size())}}}};
}

void StepConfig::validate() const {
  if (!(fire_rate > 0.0 && fire_rate <= 1.0)) {
    throw std::invalid_argument("fire rate must lie in (0, 1]");
  }
}

CellMask sample_fire_mask(int height, int width, double fire_rate, Rng& rng) {
  CellMask mask(height, width);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : mask.values) v = u(rng) < fire_rate ? 1 : 0;
  return mask;
}

template <class Real>
Matrix<Real> perceive(const BasicGrid<Real>& grid) {
  Matrix<Real> out(static_cast<Eigen::Index>(grid.config().cell_count()),
                   grid.config().perception_size());
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      perceive_cell(grid, r, c, out.row(r * grid.width() + c).data());
    }
  }
  return out;
}

template <class Real>
Matrix<Real> update_delta(const Matrix<Real>& perception, const ModelParams<Real>& params) {
  if (perception.cols() != params.perception_size()) {
    throw ShapeError("perception width " + std::to_string(perception.cols()) +
                     " does not match model input " + std::to_string(params.perception_size()));
  }
  Matrix<Real> hidden = ((perception * params.w1).rowwise() + params.b1.transpose()).cwiseMax(Real(0));
  return (hidden * params.w2).rowwise() + params.b2.transpose();
}

namespace detail {

template <class Real>
BasicGrid<Real> step_kernel(const BasicGrid<Real>& grid, const ModelParams<Real>& params,
                            const CellMask& fire, const CellMask* frozen_life,
                            StepRecord<Real>* record) {
  check_shapes(grid, params);
  const int h = grid.height();
  const int w = grid.width();
  if (fire.height != h || fire.width != w) throw ShapeError("fire mask shape mismatch");

  // Cells whose delta can matter: the dilated pre-alive set (their candidate
  // alpha feeds the post-alive test of pre-alive cells).
  CellMask pre;
  CellMask active;
  if (frozen_life) {
    if (frozen_life->height != h || frozen_life->width != w) {
      throw ShapeError("frozen alive mask shape mismatch");
    }
    active = *frozen_life;
  } else {
    pre = alive_mask(grid);
    active = dilate(pre);
  }

  std::vector<int> cells;
  cells.reserve(active.count());
  for (int i = 0; i < h * w; ++i) {
    if (active.values[i]) cells.push_back(i);
  }

  const auto n = static_cast<Eigen::Index>(cells.size());
  Matrix<Real> perception(n, params.perception_size());
  for (Eigen::Index i = 0; i < n; ++i) {
    perceive_cell(grid, cells[i] / w, cells[i] % w, perception.row(i).data());
  }
  Matrix<Real> hidden =
      ((perception * params.w1).rowwise() + params.b1.transpose()).cwiseMax(Real(0));
  Matrix<Real> delta = (hidden * params.w2).rowwise() + params.b2.transpose();

  BasicGrid<Real> out = grid;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!fire.values[cells[i]]) continue;
    Real* v = out.data().data() + static_cast<std::size_t>(cells[i]) * grid.channels();
    for (int k = 0; k < kStateChannels; ++k) v[k] += delta(i, k);
  }

  CellMask life;
  if (frozen_life) {
    life = *frozen_life;
  } else {
    const CellMask post = alive_mask(out);
    life = CellMask(h, w);
    for (std::size_t i = 0; i < life.values.size(); ++i) {
      life.values[i] = pre.values[i] && post.values[i];
    }
  }
  for (int i = 0; i < h * w; ++i) {
    if (life.values[i]) continue;
    Real* v = out.data().data() + static_cast<std::size_t>(i) * grid.channels();
    std::fill(v, v + kStateChannels, Real(0));
  }

  if (record) {
    record->input = grid;
    record->fire = fire;
    record->life_cells.clear();
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (life.values[cells[i]]) {
        record->life_cells.push_back(cells[i]);
        rows.push_back(i);
      }
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    record->perception.resize(m, perception.cols());
    record->hidden.resize(m, hidden.cols());
    for (Eigen::Index j = 0; j < m; ++j) {
      record->perception.row(j) = perception.row(rows[j]);
      record->hidden.row(j) = hidden.row(rows[j]);
    }
    record->life = std::move(life);
  }
  return out;
}

}  // namespace detail

template <class Real>
BasicGrid<Real> step(const BasicGrid<Real>& grid, const ModelParams<Real>& params,
                     const CellMask& fire) {
  return detail::step_kernel<Real>(grid, params, fire, nullptr, nullptr);
}

template <class Real>
BasicGrid<Real> step(const BasicGrid<Real>& grid, const ModelParams<Real>& params,
                     const StepConfig& config, Rng& rng) {
  config.validate();
  const CellMask fire = sample_fire_mask(grid.height(), grid.width(), config.fire_rate, rng);
  return step(grid, params, fire);
}

void validate_schedule(const Schedule& schedule, int steps) {
  for (const auto& event : schedule) {
    if (event.time < 0 || event.time >= steps) {
      throw std::out_of_range("event at t=" + std::to_string(event.time) +
                              " lies outside a run of " + std::to_string(steps) + " steps");
    }
  }
}

template <class Real>
std::vector<int> apply_events(BasicGrid<Real>& grid, const Schedule& schedule, int time, Rng& rng) {
  std::vector<int> erased;
  for (const auto& event : schedule) {
    if (event.time != time) continue;
    if (const auto* mask = std::get_if<DamageMask>(&event.action)) {
      for (int r = 0; r < grid.height(); ++r) {
        for (int c = 0; c < grid.width(); ++c) {
          if (mask->covers(r, c)) erased.push_back(r * grid.width() + c);
        }
      }
      apply_damage(grid, *mask);
    }
  }
  for (const auto& event : schedule) {
    if (event.time != time) continue;
    if (const auto* signal = std::get_if<SignalEvent>(&event.action)) {
      inject_signal(grid, signal->position, signal->jitter_radius, rng);
    }
  }
  std::sort(erased.begin(), erased.end());
  erased.erase(std::unique(erased.begin(), erased.end()), erased.end());
  return erased;
}

template <class Real>
Simulation<Real>::Simulation(BasicGrid<Real> state, const ModelParams<Real>& params,
                             StepConfig config, Rng rng)
    : state_(std::move(state)), params_(&params), config_(config), rng_(std::move(rng)) {
  config_.validate();
  check_shapes(state_, params);
}

template <class Real>
void Simulation<Real>::step() {
  state_ = nca::step(state_, *params_, config_, rng_);
  if (state_.config().env_enabled) clear_env(state_);
  ++time_;
}

template <class Real>
void Simulation<Real>::advance(int steps) {
  for (int i = 0; i < steps; ++i) step();
}

template <class Real>
Cell Simulation<Real>::signal(Cell position, int jitter_radius) {
  return inject_signal(state_, position, jitter_radius, rng_);
}

template <class Real>
std::vector<BasicGrid<Real>> rollout(const BasicGrid<Real>& seed, const ModelParams<Real>& params,
                                     int steps, const Schedule& schedule,
                                     const StepConfig& config, Rng& rng, bool record_all) {
  if (steps < 1) throw std::invalid_argument("rollout needs at least one step");
  validate_schedule(schedule, steps);
  config.validate();
  std::vector<BasicGrid<Real>> trajectory{seed};
  BasicGrid<Real> state = seed;
  for (int t = 0; t < steps; ++t) {
    apply_events(state, schedule, t, rng);
    state = step(state, params, config, rng);
    if (state.config().env_enabled) clear_env(state);
    if (record_all || t + 1 == steps) trajectory.push_back(state);
  }
  return trajectory;
}

#define NCA_INSTANTIATE_MODEL(Real)                                                          \
  template struct ModelParams<Real>;                                                         \
  template Matrix<Real> perceive<Real>(const BasicGrid<Real>&);                              \
  template Matrix<Real> update_delta<Real>(const Matrix<Real>&, const ModelParams<Real>&);   \
  template BasicGrid<Real> step<Real>(const BasicGrid<Real>&, const ModelParams<Real>&,      \
                                      const CellMask&);                                      \
  template BasicGrid<Real> step<Real>(const BasicGrid<Real>&, const ModelParams<Real>&,      \
                                      const StepConfig&, Rng&);                              \
  template std::vector<int> apply_events<Real>(BasicGrid<Real>&, const Schedule&, int, Rng&); \
  template class Simulation<Real>;                                                           \
  template std::vector<BasicGrid<Real>> rollout<Real>(                                       \
      const BasicGrid<Real>&, const ModelParams<Real>&, int, const Schedule&,                \
      const StepConfig&, Rng&, bool);                                                        \
  template BasicGrid<Real> detail::step_kernel<Real>(const BasicGrid<Real>&,                 \
                                                     const ModelParams<Real>&,               \
                                                     const CellMask&, const CellMask*,       \
                                                     detail::StepRecord<Real>*);

NCA_INSTANTIATE_MODEL(float)
NCA_INSTANTIATE_MODEL(double)

#undef NCA_INSTANTIATE_MODEL

}  // namespace nca
