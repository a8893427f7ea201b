#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "nca/presets.hpp"
#include "nca/training.hpp"
#include "oracles.hpp"

using namespace nca;

namespace {

GridConfig config(int h, int w, int genome = 0, bool env = false) {
  GridConfig c;
  c.height = h;
  c.width = w;
  c.genome_len = genome;
  c.env_enabled = env;
  return c;
}

TargetImage random_target(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  TargetImage t("rand", h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const float a = u(rng);
      for (int k = 0; k < 3; ++k) t.at(r, c, k) = u(rng) * a;
      t.at(r, c, 3) = a;
    }
  return t;
}

TrainConfig small_config(Regime regime) {
  TrainConfig c;
  c.regime = regime;
  c.batch_size = 4;
  c.pool_size = 16;
  c.steps_min = 8;
  c.steps_max = 12;
  c.iterations = 3;
  c.hidden_size = 8;
  c.threads = 1;
  c.seed = 5;
  return c;
}

std::vector<double> flatten(const ModelParams<double>& p) {
  std::vector<double> out;
  for (const auto& [name, block] : p.blocks()) out.insert(out.end(), block.begin(), block.end());
  return out;
}

}  // namespace

TEST(Loss, ZeroWhenEqual) {
  const TargetImage t = random_target(6, 5, 1);
  CellGridF64 g(config(6, 5));
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 5; ++c)
      for (int k = 0; k < 4; ++k) g.at(r, c, k) = t.at(r, c, k);
  for (int r = 0; r < 6; ++r) g.at(r, 0, 9) = 3.0;  // hidden channels are ignored
  EXPECT_EQ(loss(g, t).value, 0.0);
}

TEST(Loss, OneWhitePixel) {
  TargetImage t("w", 10, 10);
  for (int k = 0; k < 4; ++k) t.at(3, 4, k) = 1.f;
  const CellGrid g(config(10, 10));
  EXPECT_DOUBLE_EQ(loss(g, t).value, 0.01);
  EXPECT_DOUBLE_EQ(rgba_loss(g, t), 0.01);
}

TEST(Loss, MatchesScalarOracleAndGradient) {
  const TargetImage t = random_target(7, 6, 2);
  const auto g = oracle::random_grid(config(7, 6, 0, true), 3);
  const auto l = loss(g, t, true);
  EXPECT_NEAR(l.value, oracle::loss(g, t), 1e-14);
  EXPECT_NEAR(rgba_loss(g, t), l.value, 1e-15);
  ASSERT_TRUE(l.per_pixel.has_value());
  EXPECT_NEAR(std::accumulate(l.per_pixel->begin(), l.per_pixel->end(), 0.0) / 42.0, l.value,
              1e-14);
  // Central differences on a few state entries.
  for (int cell : {0, 13, 41}) {
    for (int k : {0, 3, 5}) {
      auto plus = g;
      auto minus = g;
      plus.data()[cell * 17 + k] += 1e-6;
      minus.data()[cell * 17 + k] -= 1e-6;
      const double fd = (oracle::loss(plus, t) - oracle::loss(minus, t)) / 2e-6;
      EXPECT_NEAR(l.grad(cell, k), fd, 1e-8);
    }
  }
  for (int k = 4; k < 16; ++k) EXPECT_EQ(l.grad.col(k).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Loss, DimensionMismatch) {
  const TargetImage t = random_target(5, 5, 1);
  EXPECT_THROW(loss(CellGrid(config(5, 6)), t), ShapeError);
}

TEST(Adam, ZeroGradsLeaveParams) {
  const auto p0 = oracle::random_params(48, 4, 1);
  auto p = p0;
  Adam<double> adam(p);
  adam.update(p, ParamGrads<double>::zeros_like(p), 0.1);
  EXPECT_TRUE(p == p0);
  EXPECT_EQ(adam.step_count(), 1);
}

TEST(Adam, MatchesScalarOracleOverSeveralSteps) {
  auto p = oracle::random_params(48, 5, 2);
  auto flat = flatten(p);
  Adam<double> adam(p);
  oracle::Adam ref;
  for (int step = 0; step < 5; ++step) {
    const auto gp = oracle::random_params(48, 5, 100 + step, 1.0 + step);
    ParamGrads<double> g{gp.w1, gp.b1, gp.w2, gp.b2};
    adam.update(p, g, 2e-3);
    ref.update(flat, flatten(gp), 2e-3);
    const auto got = flatten(p);
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], flat[i], 1e-14) << i;
  }
}

TEST(Adam, FirstStepIsNormalisedSignStep) {
  auto p = ModelParams<double>::zeros(48, 2);
  Adam<double> adam(p);
  auto g = ParamGrads<double>::zeros_like(p);
  g.db2(0) = 5.0;
  g.db2(1) = -1e-3;
  adam.update(p, g, 0.01);
  EXPECT_NEAR(p.b2(0), -0.01, 1e-9);
  EXPECT_NEAR(p.b2(1), 0.01, 1e-6);
  EXPECT_EQ(p.b2(2), 0.0);
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
  auto a = oracle::random_params(48, 3, 4);
  auto b = a;
  Adam<double> oa(a), ob(b);
  const auto gp = oracle::random_params(48, 3, 9);
  const ParamGrads<double> g{gp.w1, gp.b1, gp.w2, gp.b2};
  oa.update(a, g, 1e-3);
  ob.update(b, g, 1e-3);
  EXPECT_TRUE(a == b);
  auto bad = g;
  bad.db1(0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(oa.update(a, bad, 1e-3), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.steps_min = 100;
  c.steps_max = 50;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.regime = Regime::signal;
  c.batch_size = 12;
  c.worst_replace = 12;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.worst_replace = 3;
  EXPECT_NO_THROW(c.validate());
  c.fire_rate = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.repeat_signal_fraction = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.signal_min_settled = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Regime, ParseAndPrint) {
  for (Regime r : {Regime::growing, Regime::persistent, Regime::regenerating, Regime::signal})
    EXPECT_EQ(parse_regime(to_string(r)), r);
  EXPECT_THROW(parse_regime("sleeping"), std::invalid_argument);
}

TEST(RunBatch, GradientIsMeanOfPerSampleGradients) {
  const GridConfig c = config(12, 12);
  const TargetImage t = random_target(12, 12, 4);
  auto params = oracle::random_params(48, 8, 7, 0.1).cast<float>();
  params.b2(kAlphaChannel) = 0.1f;
  std::vector<BatchSample> batch(3);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch[i].start = make_seed<float>(c, Genome{}, {6, 6});
    batch[i].target = &t;
    batch[i].rng_seed = 100 + i;
  }
  const BatchOutcome out = run_batch(batch, params, 6, 0.5, 1);
  auto expected = ParamGrads<float>::zeros_like(params);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng rng(batch[i].rng_seed);
    auto [final_state, tape] = forward_recorded(batch[i].start, params, 6, {}, StepConfig{}, rng);
    EXPECT_EQ(final_state, out.finals[i]);
    EXPECT_DOUBLE_EQ(out.losses[i], loss(final_state, t).value);
    expected += backward(tape, params, loss(final_state, t).grad);
  }
  expected *= 1.0f / 3.0f;
  EXPECT_TRUE(out.mean_grads.dw1.isApprox(expected.dw1, 1e-5f));
  EXPECT_TRUE(out.mean_grads.db2.isApprox(expected.db2, 1e-5f));
}

TEST(RunBatch, IndependentOfThreadCount) {
  const GridConfig c = config(10, 10);
  const TargetImage t = random_target(10, 10, 4);
  auto params = oracle::random_params(48, 8, 7, 0.1).cast<float>();
  std::vector<BatchSample> batch(5);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch[i].start = make_seed<float>(c, Genome{}, {5, 5});
    batch[i].target = &t;
    batch[i].rng_seed = i;
  }
  const auto a = run_batch(batch, params, 5, 0.5, 1);
  const auto b = run_batch(batch, params, 5, 0.5, 3);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.mean_grads.dw1, b.mean_grads.dw1);
  EXPECT_EQ(a.mean_grads.db2, b.mean_grads.db2);
}

TEST(TrainGrowing, ZeroIterationsReturnsInitialisation) {
  const Preset p = make_preset("plain-heart", 16, 16);
  TrainConfig c = small_config(Regime::growing);
  c.iterations = 0;
  const TrainResult r = train_growing(p.family, p.grid, c);
  Rng rng(c.seed);
  EXPECT_TRUE(r.checkpoint.params == ModelParams<float>::initialize(48, 8, rng));
  EXPECT_TRUE(r.history.empty());
}

TEST(TrainGrowing, DeterministicAcrossThreadCounts) {
  const Preset p = make_preset("heart-size", 16, 16);
  TrainConfig c = small_config(Regime::growing);
  const TrainResult a = train_growing(p.family, p.grid, c);
  c.threads = 3;
  const TrainResult b = train_growing(p.family, p.grid, c);
  EXPECT_TRUE(a.checkpoint.params == b.checkpoint.params);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t i = 0; i < a.history.size(); ++i)
    EXPECT_EQ(a.history[i].mean_loss, b.history[i].mean_loss);
  EXPECT_EQ(a.checkpoint.metadata.members.size(), 2u);
  EXPECT_EQ(a.checkpoint.metadata.regime, "growing");
}

TEST(TrainGrowing, ReducesLossOnTinyHeart) {
  const Preset p = make_preset("plain-heart", 16, 16);
  TrainConfig c = small_config(Regime::growing);
  c.iterations = 120;
  c.hidden_size = 24;
  c.steps_min = 24;
  c.steps_max = 32;
  const TrainResult r = train_growing(p.family, p.grid, c);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += r.history[i].mean_loss;
    last += r.history[r.history.size() - 1 - i].mean_loss;
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST(TrainGrowing, ObserverSeesEveryIteration) {
  const Preset p = make_preset("plain-heart", 12, 12);
  TrainConfig c = small_config(Regime::growing);
  std::vector<int> seen;
  train_growing(p.family, p.grid, c,
                [&](const IterationStats& s, const ModelParams<float>& params) {
                  seen.push_back(s.iteration);
                  EXPECT_TRUE(params.all_finite());
                  EXPECT_GE(s.steps, c.steps_min);
                  EXPECT_LE(s.steps, c.steps_max);
                  EXPECT_LE(s.min_loss, s.mean_loss);
                  EXPECT_LE(s.mean_loss, s.max_loss);
                });
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2}));
}

TEST(TrainGrowing, NonFiniteLossAbortsWithIteration) {
  TargetImage t = random_target(10, 10, 1);
  t.at(2, 2, 0) = std::numeric_limits<float>::quiet_NaN();
  const TargetFamily f = family_from_mapping("nan", 0, {{Genome{}, t}});
  try {
    train_growing(f, config(10, 10), small_config(Regime::growing));
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.iteration(), 0);
  }
}

TEST(TrainGrowing, RejectsMismatchedFamily) {
  const Preset p = make_preset("heart-size", 16, 16);
  EXPECT_THROW(train_growing(p.family, config(16, 16, 0), small_config(Regime::growing)),
               std::invalid_argument);
  EXPECT_THROW(train_growing(p.family, config(20, 20, 1), small_config(Regime::growing)),
               ShapeError);
}

TEST(TrainPool, ExactlyBatchEntriesChangePerIteration) {
  const Preset p = make_preset("plain-heart", 16, 16);
  for (Regime regime : {Regime::persistent, Regime::regenerating}) {
    TrainConfig c = small_config(regime);
    c.iterations = 2;
    const TrainResult two = train_pool(p.family, p.grid, c);
    c.iterations = 3;
    const TrainResult three = train_pool(p.family, p.grid, c);
    ASSERT_EQ(two.pool.size(), 16u);
    ASSERT_EQ(three.pool.size(), 16u);
    int changed = 0;
    for (std::size_t i = 0; i < two.pool.size(); ++i)
      changed += !(two.pool[i].grid == three.pool[i].grid);
    EXPECT_EQ(changed, c.batch_size) << to_string(regime);
  }
}

TEST(TrainPool, RejectsGrowingRegime) {
  const Preset p = make_preset("plain-heart", 16, 16);
  EXPECT_THROW(train_pool(p.family, p.grid, small_config(Regime::growing)),
               std::invalid_argument);
}

TEST(RandomDamage, RadiusAndCentreRanges) {
  const Preset p = make_preset("plain-heart", 24, 24);
  CellGrid g(p.grid);
  const TargetImage& heart = p.family.image("heart");
  int r0 = 24, r1 = -1, c0 = 24, c1 = -1;
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 24; ++c) {
      g.at(r, c, kAlphaChannel) = heart.at(r, c, 3);
      if (heart.at(r, c, 3) > 0.1f) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const DamageMask m = random_damage(g, rng);
    const auto& circle = std::get<CircleDamage>(m.shape);
    EXPECT_GE(circle.radius, 3.0);
    EXPECT_LE(circle.radius, 6.0);
    EXPECT_GE(circle.center_row, r0);
    EXPECT_LE(circle.center_row, r1);
    EXPECT_GE(circle.center_col, c0);
    EXPECT_LE(circle.center_col, c1);
  }
}

TEST(TrainSignal, ParityTracksTarget) {
  const Preset p = make_preset("signal-color", 16, 16);
  TrainConfig c = p.train;
  c.iterations = 6;
  c.hidden_size = 8;
  c.pool_size = 24;
  c.steps_min = 6;
  c.steps_max = 10;
  c.threads = 1;
  const TrainResult r = train_signal(*p.signal, p.grid, c);
  ASSERT_EQ(r.pool.size(), 24u);
  int signalled = 0;
  for (const auto& e : r.pool) {
    EXPECT_EQ(e.target_id, e.signal_count % 2 ? "heart-red" : "heart-green");
    signalled += e.signal_count > 0;
  }
  EXPECT_GT(signalled, 0);
  EXPECT_EQ(r.checkpoint.metadata.regime, "signal");
}

TEST(TrainSignal, SignalCountsNeverDecreaseExceptOnReset) {
  const Preset p = make_preset("signal-color", 16, 16);
  TrainConfig c = p.train;
  c.hidden_size = 8;
  c.pool_size = 24;
  c.steps_min = 6;
  c.steps_max = 10;
  c.threads = 1;
  c.iterations = 4;
  const TrainResult before = train_signal(*p.signal, p.grid, c);
  c.iterations = 5;
  const TrainResult after = train_signal(*p.signal, p.grid, c);
  int touched = 0;
  for (std::size_t i = 0; i < before.pool.size(); ++i) {
    const auto& a = before.pool[i];
    const auto& b = after.pool[i];
    if (a.grid == b.grid) {
      EXPECT_EQ(a.signal_count, b.signal_count);
      continue;
    }
    ++touched;
    EXPECT_TRUE(b.signal_count >= a.signal_count || b.signal_count <= 1)
        << a.signal_count << " -> " << b.signal_count;
    EXPECT_LE(b.signal_count - a.signal_count, 1);
  }
  EXPECT_EQ(touched, 12);
}

TEST(TrainSignal, RepeatedSignalKeepsParity) {
  const Preset p = make_preset("signal-color", 16, 16);
  TrainConfig c = p.train;
  c.hidden_size = 8;
  c.pool_size = 24;
  c.steps_min = 6;
  c.steps_max = 10;
  c.threads = 1;
  c.repeat_signal_fraction = 1.0;
  c.signal_min_settled = 0;
  c.iterations = 4;
  const TrainResult before = train_signal(*p.signal, p.grid, c);
  c.iterations = 5;
  const TrainResult after = train_signal(*p.signal, p.grid, c);
  int repeated = 0;
  for (std::size_t i = 0; i < before.pool.size(); ++i) {
    const int d = after.pool[i].signal_count - before.pool[i].signal_count;
    EXPECT_TRUE(d == 0 || d == 2 || after.pool[i].signal_count == 0) << d;
    repeated += d == 2;
    EXPECT_EQ(after.pool[i].signal_count % 2 ? "heart-red" : "heart-green",
              after.pool[i].target_id);
  }
  EXPECT_EQ(repeated, 3);
}

TEST(TrainSignal, OnlySettledEntriesGetSignals) {
  const Preset p = make_preset("signal-color", 16, 16);
  TrainConfig c = p.train;
  c.hidden_size = 8;
  c.pool_size = 24;
  c.steps_min = 6;
  c.steps_max = 10;
  c.threads = 1;
  c.signal_min_settled = 100;
  c.iterations = 8;
  for (const auto& e : train_signal(*p.signal, p.grid, c).pool) EXPECT_EQ(e.signal_count, 0);

  c.signal_min_settled = 2;
  int signalled = 0;
  for (int n = 1; n < 12; ++n) {
    c.iterations = n;
    const TrainResult before = train_signal(*p.signal, p.grid, c);
    c.iterations = n + 1;
    const TrainResult after = train_signal(*p.signal, p.grid, c);
    for (std::size_t i = 0; i < before.pool.size(); ++i) {
      if (after.pool[i].signal_count != before.pool[i].signal_count + 1) continue;
      ++signalled;
      EXPECT_GE(before.pool[i].settled, 2);
      EXPECT_EQ(after.pool[i].settled, 1);
    }
  }
  EXPECT_GT(signalled, 0);
}

TEST(TrainSignal, Preconditions) {
  Preset p = make_preset("signal-color", 16, 16);
  TrainConfig c = p.train;
  c.iterations = 1;
  GridConfig no_env = p.grid;
  no_env.env_enabled = false;
  EXPECT_THROW(train_signal(*p.signal, no_env, c), std::invalid_argument);
  SignalSetup same = *p.signal;
  same.alt = same.base;
  EXPECT_THROW(train_signal(same, p.grid, c), std::invalid_argument);
  c.regime = Regime::growing;
  EXPECT_THROW(train_signal(*p.signal, p.grid, c), std::invalid_argument);
  EXPECT_THROW(train(p.family, p.grid, p.train, std::nullopt), std::invalid_argument);
}
