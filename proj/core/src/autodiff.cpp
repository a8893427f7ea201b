#include "nca/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace nca {
namespace {

constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

}  // namespace

template <class Real>
ParamGrads<Real> ParamGrads<Real>::zeros_like(const ModelParams<Real>& params) {
  return {Matrix<Real>::Zero(params.w1.rows(), params.w1.cols()),
          Vector<Real>::Zero(params.b1.size()),
          Matrix<Real>::Zero(params.w2.rows(), params.w2.cols()),
          Vector<Real>::Zero(params.b2.size())};
}

template <class Real>
ParamGrads<Real>& ParamGrads<Real>::operator+=(const ParamGrads& other) {
  dw1 += other.dw1;
  db1 += other.db1;
  dw2 += other.dw2;
  db2 += other.db2;
  return *this;
}

template <class Real>
ParamGrads<Real>& ParamGrads<Real>::operator*=(Real scale) {
  dw1 *= scale;
  db1 *= scale;
  dw2 *= scale;
  db2 *= scale;
  return *this;
}

template <class Real>
double ParamGrads<Real>::squared_norm() const {
  double total = 0;
  for (const auto& [name, block] : blocks()) {
    for (Real v : block) total += static_cast<double>(v) * static_cast<double>(v);
  }
  return total;
}

template <class Real>
bool ParamGrads<Real>::all_finite() const {
  return dw1.allFinite() && db1.allFinite() && dw2.allFinite() && db2.allFinite();
}

template <class Real>
std::array<std::pair<std::string_view, std::span<Real>>, 4> ParamGrads<Real>::blocks() {
  return {{{"w1", {dw1.data(), static_cast<std::size_t>(dw1.size())}},
           {"b1", {db1.data(), static_cast<std::size_t>(db1.size())}},
           {"w2", {dw2.data(), static_cast<std::size_t>(dw2.size())}},
           {"b2", {db2.data(), static_cast<std::size_t>(db2.size())}}}};
}

template <class Real>
std::array<std::pair<std::string_view, std::span<const Real>>, 4> ParamGrads<Real>::blocks()
    const {
  return {{{"w1", {dw1.data(), static_cast<std::size_t>(dw1.size())}},
           {"b1", {db1.data(), static_cast<std::size_t>(db1.size())}},
           {"w2", {dw2.data(), static_cast<std::size_t>(dw2.size())}},
           {"b2", {db2.data(), static_cast<std::size_t>(db2.size())}}}};
}

template <class Real>
std::pair<BasicGrid<Real>, Tape<Real>> forward_recorded(const BasicGrid<Real>& seed,
                                                        const ModelParams<Real>& params,
                                                        int steps, const Schedule& schedule,
                                                        const StepConfig& config, Rng& rng) {
  if (steps < 0) throw std::invalid_argument("negative step count");
  config.validate();
  validate_schedule(schedule, std::max(steps, 0));
  Tape<Real> tape;
  tape.initial = seed;
  tape.steps.reserve(static_cast<std::size_t>(steps));
  BasicGrid<Real> state = seed;
  for (int t = 0; t < steps; ++t) {
    std::vector<int> erased = apply_events(state, schedule, t, rng);
    const CellMask fire = sample_fire_mask(state.height(), state.width(), config.fire_rate, rng);
    detail::StepRecord<Real> record;
    state = detail::step_kernel<Real>(state, params, fire, nullptr, &record);
    record.damaged_cells = std::move(erased);
    if (state.config().env_enabled) clear_env(state);
    tape.steps.push_back(std::move(record));
  }
  tape.final_state = state;
  return {std::move(state), std::move(tape)};
}

template <class Real>
ParamGrads<Real> backward(const Tape<Real>& tape, const ModelParams<Real>& params,
                          const StateGradient<Real>& loss_grad) {
  const BasicGrid<Real>& ref = tape.final_state;
  const int h = ref.height();
  const int w = ref.width();
  const Eigen::Index cells = static_cast<Eigen::Index>(h) * w;
  if (loss_grad.rows() != cells || loss_grad.cols() != kStateChannels) {
    throw ShapeError("loss gradient must be (height*width) x 16");
  }
  ParamGrads<Real> grads = ParamGrads<Real>::zeros_like(params);
  StateGradient<Real> g = loss_grad;
  const Matrix<Real> w1t = params.w1.transpose();
  const Matrix<Real> w2t = params.w2.transpose();

  for (int t = static_cast<int>(tape.steps.size()) - 1; t >= 0; --t) {
    const auto& rec = tape.steps[t];
    const int channels = rec.input.channels();
    const auto m = static_cast<Eigen::Index>(rec.life_cells.size());

    // out = life * (in + fire * delta): the direct path passes g through on
    // life cells, the delta path is scaled by the fire mask.
    StateGradient<Real> g_in = StateGradient<Real>::Zero(cells, kStateChannels);
    Matrix<Real> g_delta(m, kStateChannels);
    for (Eigen::Index j = 0; j < m; ++j) {
      const int cell = rec.life_cells[j];
      g_in.row(cell) = g.row(cell);
      if (rec.fire.values[cell]) {
        g_delta.row(j) = g.row(cell);
      } else {
        g_delta.row(j).setZero();
      }
    }

    grads.dw2.noalias() += rec.hidden.transpose() * g_delta;
    grads.db2 += g_delta.colwise().sum().transpose();
    Matrix<Real> g_hidden = (g_delta * w2t).cwiseProduct(
        (rec.hidden.array() > Real(0)).template cast<Real>().matrix());
    grads.dw1.noalias() += rec.perception.transpose() * g_hidden;
    grads.db1 += g_hidden.colwise().sum().transpose();
    const Matrix<Real> g_perception = g_hidden * w1t;

    for (Eigen::Index j = 0; j < m; ++j) {
      const int cell = rec.life_cells[j];
      const int row = cell / w;
      const int col = cell % w;
      const Real* gp = g_perception.row(j).data();
      for (int k = 0; k < kStateChannels; ++k) g_in(cell, k) += gp[k];
      for (int dr = -1; dr <= 1; ++dr) {
        const int r = row + dr;
        if (r < 0 || r >= h) continue;
        for (int dc = -1; dc <= 1; ++dc) {
          const int c = col + dc;
          if (c < 0 || c >= w) continue;
          const Real kx = static_cast<Real>(kSobelX[dr + 1][dc + 1]);
          const Real ky = static_cast<Real>(kSobelY[dr + 1][dc + 1]);
          if (kx == Real(0) && ky == Real(0)) continue;
          Real* dst = g_in.row(r * w + c).data();
          for (int k = 0; k < kStateChannels; ++k) {
            dst[k] += kx * gp[channels + k] + ky * gp[2 * channels + k];
          }
        }
      }
    }
    for (int cell : rec.damaged_cells) g_in.row(cell).setZero();

    if (!g_in.allFinite() || !g_hidden.allFinite() || !g_delta.allFinite()) {
      throw NonFiniteGradient(t);
    }
    g = std::move(g_in);
  }
  if (!grads.all_finite()) throw NonFiniteGradient(0);
  return grads;
}

template <class Real>
BasicGrid<Real> replay(const Tape<Real>& tape, const ModelParams<Real>& params,
                       bool freeze_alive) {
  BasicGrid<Real> state = tape.initial;
  const int w = state.width();
  for (const auto& rec : tape.steps) {
    for (int cell : rec.damaged_cells) {
      auto v = state.cell(cell / w, cell % w);
      std::fill(v.begin(), v.end(), Real(0));
    }
    if (state.config().env_enabled) {
      for (int r = 0; r < state.height(); ++r) {
        for (int c = 0; c < w; ++c) state.at(r, c, kEnvChannel) = rec.input.at(r, c, kEnvChannel);
      }
    }
    state = detail::step_kernel<Real>(state, params, rec.fire, freeze_alive ? &rec.life : nullptr,
                                      nullptr);
    if (state.config().env_enabled) clear_env(state);
  }
  return state;
}

GradCheckReport grad_check(const CellGridF64& seed, const ModelParams<double>& params, int steps,
                           const StepConfig& config, Rng& rng, const GradCheckOptions& options,
                           const std::function<void(ParamGrads<double>&)>& tamper) {
  auto [final_state, tape] = forward_recorded(seed, params, steps, {}, config, rng);
  const int cells = final_state.height() * final_state.width();
  Matrix<double> target(cells, kStateChannels);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = u(rng);

  auto loss_and_grad = [&](const CellGridF64& grid, Matrix<double>* grad) {
    double loss = 0;
    for (int i = 0; i < cells; ++i) {
      const double* v = grid.data().data() + static_cast<std::size_t>(i) * grid.channels();
      for (int k = 0; k < kStateChannels; ++k) {
        const double d = v[k] - target(i, k);
        loss += 0.5 * d * d;
        if (grad) (*grad)(i, k) = d;
      }
    }
    return loss;
  };

  Matrix<double> loss_grad(cells, kStateChannels);
  loss_and_grad(final_state, &loss_grad);
  ParamGrads<double> analytic = backward(tape, params, loss_grad);
  if (tamper) tamper(analytic);

  GradCheckReport report;
  report.passed = true;
  ModelParams<double> probe = params;
  auto probe_blocks = probe.blocks();
  const auto analytic_blocks = std::as_const(analytic).blocks();
  const double hstep = options.step_size;
  double worst_score = -1;
  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    auto [name, values] = probe_blocks[b];
    const auto grad_values = analytic_blocks[b].second;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + hstep;
      const double plus = loss_and_grad(replay(tape, probe, true), nullptr);
      values[i] = original - hstep;
      const double minus = loss_and_grad(replay(tape, probe, true), nullptr);
      values[i] = original;
      const double numeric = (plus - minus) / (2 * hstep);
      const double a = grad_values[i];
      const double abs_err = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      // Errors are normalised so that `score >= tolerance` means failure in
      // both the relative and the absolute regime.
      double score;
      if (scale < options.abs_floor) {
        score = abs_err / options.abs_tolerance * options.tolerance;
      } else {
        const double rel = abs_err / scale;
        report.max_rel_error = std::max(report.max_rel_error, rel);
        score = rel;
      }
      ++report.checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (score > worst_score) {
        worst_score = score;
        report.worst_block = std::string(name);
        report.worst_index = i;
      }
      if (!(score < options.tolerance)) report.passed = false;
    }
  }
  return report;
}

#define NCA_INSTANTIATE_AUTODIFF(Real)                                                        \
  template struct ParamGrads<Real>;                                                           \
  template std::pair<BasicGrid<Real>, Tape<Real>> forward_recorded<Real>(                     \
      const BasicGrid<Real>&, const ModelParams<Real>&, int, const Schedule&,                 \
      const StepConfig&, Rng&);                                                               \
  template ParamGrads<Real> backward<Real>(const Tape<Real>&, const ModelParams<Real>&,       \
                                           const StateGradient<Real>&);                       \
  template BasicGrid<Real> replay<Real>(const Tape<Real>&, const ModelParams<Real>&, bool);

NCA_INSTANTIATE_AUTODIFF(float)
NCA_INSTANTIATE_AUTODIFF(double)

#undef NCA_INSTANTIATE_AUTODIFF

}  // namespace nca
