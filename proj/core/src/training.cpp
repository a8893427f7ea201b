#include "nca/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nca/parallel.hpp"

namespace nca {
namespace {

void check_target(const GridConfig& grid, const TargetImage& target) {
  if (target.height != grid.height || target.width != grid.width) {
    throw ShapeError("target '" + target.id + "' is " + std::to_string(target.width) + "x" +
                     std::to_string(target.height) + " but the grid is " +
                     std::to_string(grid.width) + "x" + std::to_string(grid.height));
  }
}

double learning_rate_at(const TrainConfig& config, int iteration) {
  if (config.lr_decay_iteration > 0 && iteration >= config.lr_decay_iteration) {
    return config.learning_rate * config.lr_decay_factor;
  }
  return config.learning_rate;
}

IterationStats summarize(int iteration, int steps, const std::vector<double>& losses) {
  IterationStats stats;
  stats.iteration = iteration;
  stats.steps = steps;
  stats.mean_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / losses.size();
  stats.min_loss = *std::min_element(losses.begin(), losses.end());
  stats.max_loss = *std::max_element(losses.begin(), losses.end());
  if (!std::isfinite(stats.mean_loss)) throw TrainingDiverged(iteration);
  return stats;
}

CheckpointMetadata describe(const TrainConfig& config, const TargetFamily& family, int iterations) {
  CheckpointMetadata meta;
  meta.regime = to_string(config.regime);
  meta.family = family.name;
  for (const auto& m : family.members) meta.members.push_back({m.genome.to_string(), m.target_id});
  meta.iterations = iterations;
  meta.seed = config.seed;
  return meta;
}

// Shared optimisation loop. `prepare` fills the batch for an iteration and
// `finish` consumes the outcome (pool write-back).
struct Trainer {
  const GridConfig& grid;
  const TrainConfig& config;
  const IterationCallback& observer;
  Rng rng;
  ModelParams<float> params;
  Adam<float> adam;
  std::vector<IterationStats> history;

  Trainer(const GridConfig& g, const TrainConfig& c, const IterationCallback& o)
      : grid(g),
        config(c),
        observer(o),
        rng(c.seed),
        params(ModelParams<float>::initialize(g.perception_size(), c.hidden_size, rng)),
        adam(params) {}

  int draw_steps() {
    std::uniform_int_distribution<int> dist(config.steps_min, config.steps_max);
    return dist(rng);
  }

  std::uint64_t draw_seed() { return rng(); }

  BatchOutcome iterate(int iteration, int steps, const std::vector<BatchSample>& batch) {
    BatchOutcome outcome = run_batch(batch, params, steps, config.fire_rate, config.threads);
    const IterationStats stats = summarize(iteration, steps, outcome.losses);
    adam.update(params, outcome.mean_grads, learning_rate_at(config, iteration));
    if (!params.all_finite()) throw TrainingDiverged(iteration);
    history.push_back(stats);
    if (observer) observer(stats, params);
    return outcome;
  }
};

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, Rng& rng) {
  std::vector<std::size_t> all(population);
  std::iota(all.begin(), all.end(), std::size_t{0});
  // Partial Fisher-Yates keeps the draw order deterministic for a given rng.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  return all;
}

}  // namespace

template <class Real>
LossValue<Real> loss(const BasicGrid<Real>& state, const TargetImage& target, bool per_pixel) {
  check_target(state.config(), target);
  const int cells = state.height() * state.width();
  LossValue<Real> out;
  out.grad = StateGradient<Real>::Zero(cells, kStateChannels);
  if (per_pixel) out.per_pixel.emplace(static_cast<std::size_t>(cells), 0.0);
  const double norm = 1.0 / (static_cast<double>(cells) * 4.0);
  double total = 0;
  for (int i = 0; i < cells; ++i) {
    const Real* v = state.data().data() + static_cast<std::size_t>(i) * state.channels();
    const float* t = target.rgba.data() + static_cast<std::size_t>(i) * 4;
    double pixel = 0;
    for (int k = 0; k < 4; ++k) {
      const double d = static_cast<double>(v[k]) - static_cast<double>(t[k]);
      pixel += d * d;
      out.grad(i, k) = static_cast<Real>(2.0 * d * norm);
    }
    total += pixel;
    if (per_pixel) (*out.per_pixel)[i] = pixel / 4.0;
  }
  out.value = total * norm;
  return out;
}

template <class Real>
double rgba_loss(const BasicGrid<Real>& state, const TargetImage& target) {
  check_target(state.config(), target);
  const int cells = state.height() * state.width();
  double total = 0;
  for (int i = 0; i < cells; ++i) {
    const Real* v = state.data().data() + static_cast<std::size_t>(i) * state.channels();
    const float* t = target.rgba.data() + static_cast<std::size_t>(i) * 4;
    for (int k = 0; k < 4; ++k) {
      const double d = static_cast<double>(v[k]) - static_cast<double>(t[k]);
      total += d * d;
    }
  }
  return total / (static_cast<double>(cells) * 4.0);
}

template LossValue<float> loss<float>(const BasicGrid<float>&, const TargetImage&, bool);
template LossValue<double> loss<double>(const BasicGrid<double>&, const TargetImage&, bool);
template double rgba_loss<float>(const BasicGrid<float>&, const TargetImage&);
template double rgba_loss<double>(const BasicGrid<double>&, const TargetImage&);

template <class Real>
Adam<Real>::Adam(const ModelParams<Real>& shape, AdamConfig config)
    : config_(config),
      m_(ParamGrads<Real>::zeros_like(shape)),
      v_(ParamGrads<Real>::zeros_like(shape)) {}

template <class Real>
void Adam<Real>::update(ModelParams<Real>& params, const ParamGrads<Real>& grads,
                        double learning_rate) {
  if (!grads.all_finite()) throw std::invalid_argument("non-finite gradient passed to Adam");
  if (grads.dw1.rows() != params.w1.rows() || grads.dw1.cols() != params.w1.cols() ||
      grads.dw2.rows() != params.w2.rows()) {
    throw ShapeError("gradient shape does not match parameters");
  }
  ++steps_;
  const double scale = 1.0 / (std::sqrt(grads.squared_norm()) + config_.normalize_epsilon);
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  auto param_blocks = params.blocks();
  const auto grad_blocks = grads.blocks();
  auto m_blocks = m_.blocks();
  auto v_blocks = v_.blocks();
  for (std::size_t b = 0; b < param_blocks.size(); ++b) {
    auto p = param_blocks[b].second;
    const auto g = grad_blocks[b].second;
    auto m = m_blocks[b].second;
    auto v = v_blocks[b].second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * scale;
      const double mi = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      const double vi = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double step = learning_rate * (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon);
      p[i] = static_cast<Real>(p[i] - step);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::growing: return "growing";
    case Regime::persistent: return "persistent";
    case Regime::regenerating: return "regenerating";
    case Regime::signal: return "signal";
  }
  return "unknown";
}

Regime parse_regime(const std::string& text) {
  if (text == "growing") return Regime::growing;
  if (text == "persistent") return Regime::persistent;
  if (text == "regenerating") return Regime::regenerating;
  if (text == "signal") return Regime::signal;
  throw std::invalid_argument("unknown regime '" + text + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (steps_min < 1 || steps_min > steps_max) {
    throw std::invalid_argument("step range must satisfy 1 <= min <= max");
  }
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (hidden_size < 1) throw std::invalid_argument("hidden size must be positive");
  if (!(fire_rate > 0.0 && fire_rate <= 1.0)) {
    throw std::invalid_argument("fire rate must lie in (0, 1]");
  }
  if (regime != Regime::growing) {
    if (pool_size < batch_size) throw std::invalid_argument("pool must hold at least one batch");
    if (worst_replace < 0 || worst_replace >= batch_size) {
      throw std::invalid_argument("worst_replace must be smaller than the batch size");
    }
  }
  if (damage_fraction < 0 || damage_fraction > 1 || signal_fraction < 0 || signal_fraction > 1 ||
      repeat_signal_fraction < 0 || repeat_signal_fraction > 1) {
    throw std::invalid_argument("fractions must lie in [0, 1]");
  }
  if (jitter_radius < 0) throw std::invalid_argument("jitter radius must be non-negative");
  if (signal_min_settled < 0) throw std::invalid_argument("signal_min_settled must be non-negative");
}

Cell seed_position(const GridConfig& grid) { return {grid.height / 2, grid.width / 2}; }

BatchOutcome run_batch(const std::vector<BatchSample>& samples, const ModelParams<float>& params,
                       int steps, double fire_rate, int threads) {
  if (samples.empty()) throw std::invalid_argument("empty batch");
  const StepConfig step_config{fire_rate};
  std::vector<CellGrid> finals(samples.size());
  std::vector<double> losses(samples.size());
  std::vector<ParamGrads<float>> grads(samples.size());
  parallel_for(
      samples.size(),
      [&](std::size_t i) {
        const BatchSample& sample = samples[i];
        Rng rng(sample.rng_seed);
        auto [final_state, tape] =
            forward_recorded(sample.start, params, steps, sample.schedule, step_config, rng);
        LossValue<float> l = loss(final_state, *sample.target);
        losses[i] = l.value;
        if (std::isfinite(l.value)) {
          grads[i] = backward(tape, params, l.grad);
        } else {
          grads[i] = ParamGrads<float>::zeros_like(params);
        }
        finals[i] = std::move(final_state);
      },
      threads);
  // Fixed-order reduction keeps results independent of the thread count.
  BatchOutcome out;
  out.mean_grads = ParamGrads<float>::zeros_like(params);
  for (const auto& g : grads) out.mean_grads += g;
  out.mean_grads *= 1.0f / static_cast<float>(samples.size());
  out.finals = std::move(finals);
  out.losses = std::move(losses);
  return out;
}

DamageMask random_damage(const CellGrid& grid, Rng& rng) {
  const double side = std::min(grid.height(), grid.width());
  std::uniform_real_distribution<double> radius(side / 8.0, side / 4.0);
  int r0 = grid.height(), r1 = -1, c0 = grid.width(), c1 = -1;
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      if (grid.at(r, c, kAlphaChannel) > grid.config().alive_threshold) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
  }
  if (r1 < 0) {
    r0 = r1 = grid.height() / 2;
    c0 = c1 = grid.width() / 2;
  }
  std::uniform_real_distribution<double> row(r0, r1);
  std::uniform_real_distribution<double> col(c0, c1);
  const double rad = radius(rng);
  const double cr = r0 == r1 ? r0 : row(rng);
  const double cc = c0 == c1 ? c0 : col(rng);
  return DamageMask::circle(cr, cc, rad);
}

TrainResult train_growing(const TargetFamily& family, const GridConfig& grid,
                          const TrainConfig& config, const IterationCallback& observer) {
  config.validate();
  grid.validate();
  if (family.members.empty()) throw std::invalid_argument("empty target family");
  if (family.genome_len != grid.genome_len) {
    throw std::invalid_argument("family genome length does not match the grid");
  }
  for (const auto& [id, image] : family.images) check_target(grid, image);

  Trainer trainer(grid, config, observer);
  std::uniform_int_distribution<std::size_t> pick(0, family.members.size() - 1);
  for (int it = 0; it < config.iterations; ++it) {
    const int steps = trainer.draw_steps();
    std::vector<BatchSample> batch(config.batch_size);
    for (auto& sample : batch) {
      const FamilyMember& member = family.members[pick(trainer.rng)];
      sample.start = make_seed<float>(grid, member.genome, seed_position(grid));
      sample.target = &family.image(member.target_id);
      sample.rng_seed = trainer.draw_seed();
    }
    trainer.iterate(it, steps, batch);
  }

  TrainResult result;
  result.checkpoint = {kCheckpointVersion, grid, config.fire_rate, trainer.params,
                       describe(config, family, config.iterations)};
  result.history = std::move(trainer.history);
  return result;
}

TrainResult train_pool(const TargetFamily& family, const GridConfig& grid,
                       const TrainConfig& config, const IterationCallback& observer) {
  config.validate();
  grid.validate();
  if (config.regime != Regime::persistent && config.regime != Regime::regenerating) {
    throw std::invalid_argument("train_pool handles the persistent and regenerating regimes");
  }
  if (family.members.empty()) throw std::invalid_argument("empty target family");
  if (family.genome_len != grid.genome_len) {
    throw std::invalid_argument("family genome length does not match the grid");
  }
  for (const auto& [id, image] : family.images) check_target(grid, image);

  Trainer trainer(grid, config, observer);
  std::uniform_int_distribution<std::size_t> pick(0, family.members.size() - 1);
  auto fresh_entry = [&] {
    PoolEntry entry;
    const FamilyMember& member = family.members[pick(trainer.rng)];
    entry.genome = member.genome;
    entry.target_id = member.target_id;
    entry.grid = make_seed<float>(grid, member.genome, seed_position(grid));
    entry.last_loss = rgba_loss(entry.grid, family.image(member.target_id));
    return entry;
  };
  std::vector<PoolEntry> pool;
  pool.reserve(config.pool_size);
  for (int i = 0; i < config.pool_size; ++i) pool.push_back(fresh_entry());

  for (int it = 0; it < config.iterations; ++it) {
    const int steps = trainer.draw_steps();
    std::vector<std::size_t> chosen = sample_indices(pool.size(), config.batch_size, trainer.rng);
    std::stable_sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
      return pool[a].last_loss > pool[b].last_loss;
    });
    for (int k = 0; k < config.worst_replace; ++k) pool[chosen[k]] = fresh_entry();
    if (config.regime == Regime::regenerating) {
      // Damage the best-performing (most grown) of the kept entries.
      const int kept = config.batch_size - config.worst_replace;
      const int damaged = static_cast<int>(std::lround(config.damage_fraction * kept));
      for (int k = 0; k < damaged; ++k) {
        PoolEntry& entry = pool[chosen[config.batch_size - 1 - k]];
        apply_damage(entry.grid, random_damage(entry.grid, trainer.rng));
      }
    }
    std::vector<BatchSample> batch(chosen.size());
    for (std::size_t b = 0; b < chosen.size(); ++b) {
      const PoolEntry& entry = pool[chosen[b]];
      batch[b].start = entry.grid;
      batch[b].target = &family.image(entry.target_id);
      batch[b].rng_seed = trainer.draw_seed();
    }
    BatchOutcome outcome = trainer.iterate(it, steps, batch);
    for (std::size_t b = 0; b < chosen.size(); ++b) {
      pool[chosen[b]].grid = std::move(outcome.finals[b]);
      pool[chosen[b]].last_loss = outcome.losses[b];
    }
  }

  TrainResult result;
  result.checkpoint = {kCheckpointVersion, grid, config.fire_rate, trainer.params,
                       describe(config, family, config.iterations)};
  result.history = std::move(trainer.history);
  result.pool = std::move(pool);
  return result;
}

TrainResult train_signal(const SignalSetup& setup, const GridConfig& grid,
                         const TrainConfig& config, const IterationCallback& observer) {
  config.validate();
  grid.validate();
  if (!grid.env_enabled) throw std::invalid_argument("signal training needs the environment channel");
  if (config.regime != Regime::signal) throw std::invalid_argument("regime must be signal");
  if (grid.genome_len != 0) throw std::invalid_argument("signal training uses an empty genome");
  check_target(grid, setup.base);
  check_target(grid, setup.alt);
  if (setup.base.id == setup.alt.id) throw std::invalid_argument("base and alt targets must differ");
  if (!(setup.position.row >= 0 && setup.position.row < grid.height && setup.position.col >= 0 &&
        setup.position.col < grid.width)) {
    throw std::invalid_argument("signal position outside grid");
  }

  auto target_of = [&](int signal_count) -> const TargetImage& {
    return signal_count % 2 == 0 ? setup.base : setup.alt;
  };

  Trainer trainer(grid, config, observer);
  auto fresh_entry = [&] {
    PoolEntry entry;
    entry.grid = make_seed<float>(grid, Genome{}, seed_position(grid));
    entry.target_id = setup.base.id;
    entry.last_loss = rgba_loss(entry.grid, setup.base);
    return entry;
  };
  std::vector<PoolEntry> pool(config.pool_size);
  for (auto& entry : pool) entry = fresh_entry();

  for (int it = 0; it < config.iterations; ++it) {
    const int steps = trainer.draw_steps();
    std::vector<std::size_t> chosen = sample_indices(pool.size(), config.batch_size, trainer.rng);
    std::stable_sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
      return pool[a].last_loss > pool[b].last_loss;
    });
    for (int k = 0; k < config.worst_replace; ++k) pool[chosen[k]] = fresh_entry();

    // Split the kept entries into a signalled subset and a persisting one.
    // Only entries that have settled for long enough are eligible.
    const auto kept_count = chosen.size() - static_cast<std::size_t>(config.worst_replace);
    std::vector<std::size_t> eligible;
    for (std::size_t b = config.worst_replace; b < chosen.size(); ++b) {
      if (pool[chosen[b]].settled >= config.signal_min_settled) eligible.push_back(b);
    }
    const auto signalled_count = std::min(
        eligible.size(), static_cast<std::size_t>(std::lround(config.signal_fraction * kept_count)));
    std::vector<std::size_t> order = sample_indices(eligible.size(), signalled_count, trainer.rng);
    std::vector<bool> gets_signal(chosen.size(), false);
    for (std::size_t k : order) gets_signal[eligible[k]] = true;

    std::vector<BatchSample> batch(chosen.size());
    std::bernoulli_distribution repeat(config.repeat_signal_fraction);
    std::uniform_int_distribution<int> repeat_time(std::max(1, steps / 4), std::max(1, steps / 2));
    for (std::size_t b = 0; b < chosen.size(); ++b) {
      PoolEntry& entry = pool[chosen[b]];
      if (gets_signal[b]) {
        ++entry.signal_count;
        entry.settled = 0;
        batch[b].schedule.push_back({0, SignalEvent{setup.position, config.jitter_radius}});
        // A second signal inside the same rollout: the organism has to switch
        // and then switch back.
        if (config.repeat_signal_fraction > 0 && steps > 1 && repeat(trainer.rng)) {
          ++entry.signal_count;
          batch[b].schedule.push_back(
              {repeat_time(trainer.rng), SignalEvent{setup.position, config.jitter_radius}});
        }
      }
      entry.target_id = target_of(entry.signal_count).id;
      batch[b].start = entry.grid;
      batch[b].target = &target_of(entry.signal_count);
      batch[b].rng_seed = trainer.draw_seed();
    }
    BatchOutcome outcome = trainer.iterate(it, steps, batch);
    for (std::size_t b = 0; b < chosen.size(); ++b) {
      pool[chosen[b]].grid = std::move(outcome.finals[b]);
      pool[chosen[b]].last_loss = outcome.losses[b];
      ++pool[chosen[b]].settled;
    }
  }

  TrainResult result;
  TargetFamily family;
  family.name = "signal:" + setup.base.id + "/" + setup.alt.id;
  family.members.push_back({Genome{}, setup.base.id});
  result.checkpoint = {kCheckpointVersion, grid, config.fire_rate, trainer.params,
                       describe(config, family, config.iterations)};
  result.history = std::move(trainer.history);
  result.pool = std::move(pool);
  return result;
}

TrainResult train(const TargetFamily& family, const GridConfig& grid, const TrainConfig& config,
                  const std::optional<SignalSetup>& signal, const IterationCallback& observer) {
  switch (config.regime) {
    case Regime::growing:
      return train_growing(family, grid, config, observer);
    case Regime::persistent:
    case Regime::regenerating:
      return train_pool(family, grid, config, observer);
    case Regime::signal:
      if (!signal) throw std::invalid_argument("signal regime needs base/alt targets");
      return train_signal(*signal, grid, config, observer);
  }
  throw std::invalid_argument("unknown regime");
}

}  // namespace nca
