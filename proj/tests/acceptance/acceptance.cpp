// Runs the end-to-end acceptance criteria and prints one PASS/FAIL line per
// criterion. Exit status is non-zero if any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "nca/autodiff.hpp"
#include "nca/checkpoint.hpp"
#include "nca/presets.hpp"
#include "nca/training.hpp"
#include "oracles.hpp"

using namespace nca;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string out_dir;

void save_model(const TrainResult& result, const Preset& preset, const std::string& name) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  save_checkpoint(tag_checkpoint(result.checkpoint, preset), fs::path(out_dir) / (name + ".nca.json"));
}

void progress(const std::string& label, const IterationStats& s, int total) {
  const int every = std::max(1, total / 10);
  if ((s.iteration + 1) % every == 0) {
    std::fprintf(stderr, "  [%s] iter %d/%d loss %.5f\n", label.c_str(), s.iteration + 1, total,
                 s.mean_loss);
  }
}

TrainResult train_preset(const Preset& preset, TrainConfig config, const std::string& label) {
  return train(preset.family, preset.grid, config, preset.signal,
               [&](const IterationStats& s, const ModelParams<float>&) {
                 progress(label, s, config.iterations);
               });
}

std::string fmt(const char* format, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

// ---------------------------------------------------------------- 1

Outcome gradient_correctness() {
  Rng meta(2024);
  const int step_options[] = {1, 4, 16};
  double worst_rel = 0;
  double worst_abs = 0;
  bool ok = true;
  std::string failures;
  for (int i = 0; i < 10; ++i) {
    GridConfig c;
    c.height = 4 + static_cast<int>(meta() % 9);
    c.width = 4 + static_cast<int>(meta() % 9);
    c.genome_len = static_cast<int>(meta() % 4);
    Genome genome;
    for (int b = 0; b < c.genome_len; ++b) genome.bits.push_back(static_cast<double>(meta() & 1));
    CellGridF64 seed;
    if (i % 2 == 0) {
      seed = make_seed<double>(c, genome, {c.height / 2, c.width / 2});
    } else {
      seed = oracle::random_grid(c, meta(), -0.3, 0.6);
    }
    auto params = oracle::random_params(c.perception_size(), 8, meta(), 0.2);
    params.b2(kAlphaChannel) += 0.1;
    const int steps = step_options[i % 3];
    Rng rng(meta());
    const GradCheckReport report = grad_check(seed, params, steps, StepConfig{0.5}, rng);
    worst_rel = std::max(worst_rel, report.max_rel_error);
    worst_abs = std::max(worst_abs, report.max_abs_error);
    if (!report.passed) {
      ok = false;
      failures += " instance " + std::to_string(i) + " (" + report.worst_block + "[" +
                  std::to_string(report.worst_index) + "])";
    }
  }
  return {ok, fmt("10 instances, max relative error %.2e, max absolute error %.2e", worst_rel,
                  worst_abs) +
                  failures};
}

// ---------------------------------------------------------------- 2

Outcome growing_convergence() {
  const Preset preset = make_preset("plain-heart", 24, 24);
  TrainConfig config = preset.train;
  config.hidden_size = 64;
  config.batch_size = 4;
  config.iterations = 1500;
  const TrainResult r = train_preset(preset, config, "plain-heart");
  save_model(r, preset, "plain-heart");
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) first += r.history[i].mean_loss / 10;
  for (int i = 0; i < 50; ++i) last += r.history[r.history.size() - 1 - i].mean_loss / 50;
  return {last < 0.1 * first,
          fmt("first-10 mean %.5f, final-50 mean %.5f, ratio %.4f (need < 0.1)", first, last,
              last / first)};
}

// ---------------------------------------------------------------- 3, 4

constexpr int kEvalSeeds = 5;

// Grows every family member for `steps` and checks own-target loss < 0.5x the
// loss against every other member's target.
Outcome discrimination(const Preset& preset, const ModelParams<float>& params, int steps,
                       double fire_rate) {
  bool ok = true;
  double worst_ratio = 0;
  std::ostringstream detail;
  for (const auto& member : preset.family.members) {
    for (int s = 1; s <= kEvalSeeds; ++s) {
      const CellGrid grown =
          grow(params, preset.grid, member.genome, steps, fire_rate, 1000 + s);
      const double own = rgba_loss(grown, preset.family.image(member.target_id));
      for (const auto& other : preset.family.members) {
        if (other.target_id == member.target_id) continue;
        const double against = rgba_loss(grown, preset.family.image(other.target_id));
        const double ratio = own / against;
        worst_ratio = std::max(worst_ratio, ratio);
        if (!(ratio < 0.5)) {
          ok = false;
          detail << " " << member.genome.to_string() << "/seed" << s << " vs " << other.target_id
                 << " ratio " << ratio;
        }
      }
    }
  }
  return {ok, std::to_string(preset.family.size()) + " genomes x " + std::to_string(kEvalSeeds) +
                  fmt(" seeds, worst own/other loss ratio %.3f (need < 0.5)", worst_ratio) +
                  detail.str()};
}

Outcome internal_signal_discrimination() {
  const Preset preset = make_preset("heart-size", 24, 24);
  TrainConfig config = preset.train;
  config.hidden_size = 64;
  config.batch_size = 4;
  config.iterations = 2000;
  const TrainResult r = train_preset(preset, config, "heart-size");
  save_model(r, preset, "heart-size");
  Outcome o = discrimination(preset, r.checkpoint.params, config.steps_max, config.fire_rate);
  // Out-of-training probe: reported only.
  const CellGrid probe =
      grow(r.checkpoint.params, preset.grid, Genome{{0.5}}, config.steps_max, config.fire_rate, 7);
  const auto losses = losses_against(probe, preset.targets());
  std::ostringstream note;
  note << "; c4=0.5 probe:";
  for (const auto& l : losses) note << " " << l.target_id << "=" << l.loss;
  o.detail += note.str();
  return o;
}

Outcome multi_genome_capacity() {
  const Preset preset = make_preset("four-organisms", 24, 24);
  TrainConfig config = preset.train;
  config.hidden_size = 64;
  config.batch_size = 4;
  config.iterations = 3000;
  config.lr_decay_iteration = 2000;
  const TrainResult r = train_preset(preset, config, "four-organisms");
  save_model(r, preset, "four-organisms");
  return discrimination(preset, r.checkpoint.params, config.steps_max, config.fire_rate);
}

// ---------------------------------------------------------------- 5, 6

TrainConfig pool_config(const Preset& preset, Regime regime) {
  TrainConfig config = preset.train;
  config.regime = regime;
  config.hidden_size = 64;
  config.batch_size = 8;
  config.iterations = 2000;
  return config;
}

Outcome persistence() {
  const Preset preset = make_preset("plain-heart", 24, 24);
  TrainConfig config = pool_config(preset, Regime::persistent);
  config.iterations = 3000;
  config.lr_decay_iteration = 2000;
  const TrainResult r = train_preset(preset, config, "persistent");
  save_model(r, preset, "persistent");
  const TargetImage& target = preset.family.image("heart");
  bool ok = true;
  double worst = 0;
  for (int s = 1; s <= 3; ++s) {
    Simulation<float> sim(make_seed<float>(preset.grid, Genome{}, seed_position(preset.grid)),
                          r.checkpoint.params, StepConfig{config.fire_rate}, Rng(s));
    sim.advance(200);
    const double at200 = rgba_loss(sim.state(), target);
    sim.advance(200);
    const double at400 = rgba_loss(sim.state(), target);
    worst = std::max(worst, at400 / at200);
    ok = ok && at400 <= 2 * at200;
  }
  return {ok, fmt("3 seeds, worst loss(400)/loss(200) = %.3f (need <= 2)", worst)};
}

Outcome regeneration() {
  const Preset preset = make_preset("plain-heart", 24, 24);
  const TrainConfig config = pool_config(preset, Regime::regenerating);
  const TrainResult r = train_preset(preset, config, "regenerating");
  save_model(r, preset, "regenerating");
  const TargetImage& target = preset.family.image("heart");
  // Limb-scale damage on the upper-left lobe of the heart.
  int r0 = preset.grid.height, r1 = -1, c0 = preset.grid.width, c1 = -1;
  for (int row = 0; row < preset.grid.height; ++row)
    for (int col = 0; col < preset.grid.width; ++col)
      if (target.at(row, col, 3) > 0.1f) {
        r0 = std::min(r0, row);
        r1 = std::max(r1, row);
        c0 = std::min(c0, col);
        c1 = std::max(c1, col);
      }
  const DamageMask damage = DamageMask::circle(r0 + 0.3 * (r1 - r0), c0 + 0.25 * (c1 - c0),
                                               std::min(preset.grid.height, preset.grid.width) / 6.0);
  bool ok = true;
  double worst = 0;
  double worst_damaged = 0;
  for (int s = 1; s <= 3; ++s) {
    Simulation<float> sim(make_seed<float>(preset.grid, Genome{}, seed_position(preset.grid)),
                          r.checkpoint.params, StepConfig{config.fire_rate}, Rng(s));
    sim.advance(200);
    const double before = rgba_loss(sim.state(), target);
    sim.damage(damage);
    worst_damaged = std::max(worst_damaged, rgba_loss(sim.state(), target) / before);
    sim.advance(50);
    const double after = rgba_loss(sim.state(), target);
    worst = std::max(worst, after / before);
    ok = ok && after <= 2 * before;
  }
  return {ok, fmt("3 seeds, damage raised loss up to %.1fx; worst loss(250)/loss(200) = %.3f "
                  "(need <= 2)",
                  worst_damaged, worst)};
}

// ---------------------------------------------------------------- 7

struct ToggleResult {
  bool ok = true;
  std::string trace;
};

// Grows for 200 steps, then delivers `signals` signals `spacing` steps apart.
// After each one, the closest target must match the parity within `window`
// steps and stay matched at the end of the spacing interval.
ToggleResult toggles(const Preset& preset, const ModelParams<float>& params, double fire_rate,
                     std::uint64_t seed, Cell where, int jitter, int signals, int spacing,
                     int window) {
  const auto targets = preset.targets();
  const std::string& base = preset.signal->base.id;
  const std::string& alt = preset.signal->alt.id;
  Simulation<float> sim(make_seed<float>(preset.grid, Genome{}, seed_position(preset.grid)),
                        params, StepConfig{fire_rate}, Rng(seed));
  sim.advance(200);
  ToggleResult out;
  auto closest_id = [&] { return closest(losses_against(sim.state(), targets)).target_id; };
  if (closest_id() != base) {
    out.ok = false;
    out.trace += " grown organism is not " + base;
  }
  for (int k = 1; k <= signals; ++k) {
    sim.signal(where, jitter);
    const std::string& want = k % 2 ? alt : base;
    int reached = -1;
    for (int t = 1; t <= spacing; ++t) {
      sim.step();
      if (reached < 0 && t <= window && closest_id() == want) reached = t;
    }
    const bool held = closest_id() == want;
    out.trace += " s" + std::to_string(k) + ":" + (reached < 0 ? "-" : std::to_string(reached));
    if (reached < 0 || !held) out.ok = false;
    if (!held) out.trace += "(lost)";
  }
  return out;
}

Outcome signal_toggling() {
  const Preset preset = make_preset("signal-color", 16, 16);
  TrainConfig config = preset.train;
  config.hidden_size = 64;
  config.iterations = 6000;
  config.lr_decay_iteration = 4500;
  const TrainResult r = train_preset(preset, config, "signal-color");
  save_model(r, preset, "signal-color");
  const Cell center = preset.signal->position;
  bool ok = true;
  std::string detail;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const ToggleResult t = toggles(preset, r.checkpoint.params, config.fire_rate, s, center, 0, 4,
                                   100, 100);
    ok = ok && t.ok;
    detail += " seed" + std::to_string(s) + (t.ok ? " ok" : " FAIL") + t.trace + ";";
  }
  const ToggleResult jittered = toggles(preset, r.checkpoint.params, config.fire_rate, 11, center,
                                        config.jitter_radius, 2, 100, 100);
  const Cell outside{center.row - config.jitter_radius - 1, center.col + config.jitter_radius + 1};
  const ToggleResult out_of_region =
      toggles(preset, r.checkpoint.params, config.fire_rate, 12, outside, 0, 2, 200, 200);
  ok = ok && jittered.ok && out_of_region.ok;
  detail += std::string(" jittered") + (jittered.ok ? " ok" : " FAIL") + jittered.trace + ";";
  detail += std::string(" outside") + (out_of_region.ok ? " ok" : " FAIL") + out_of_region.trace;
  return {ok, "steps to parity after each signal:" + detail};
}

// ---------------------------------------------------------------- 8

Outcome structural_invariants() {
  std::vector<std::string> failed;
  auto check = [&](bool cond, const std::string& name) {
    if (!cond) failed.push_back(name);
  };
  Rng rng(8);
  GridConfig c;
  c.height = 16;
  c.width = 16;
  c.genome_len = 2;
  c.env_enabled = true;
  auto params = oracle::random_params(c.perception_size(), 16, 3, 0.3).cast<float>();
  params.b2(kAlphaChannel) += 0.05f;

  // Environment channel is never written by the update.
  bool env_ok = true;
  bool dead_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    CellGrid g = oracle::random_grid(c, 50 + trial, -0.3, 0.5).cast<float>();
    for (int r = 0; r < c.height; ++r)
      for (int col = 0; col < c.width; ++col) g.at(r, col, kEnvChannel) = (r * col) % 5 == 1;
    const CellGrid next = step(g, params, StepConfig{}, rng);
    const CellMask pre = alive_mask(g);
    for (int r = 0; r < c.height; ++r)
      for (int col = 0; col < c.width; ++col) {
        env_ok = env_ok && next.at(r, col, kEnvChannel) == g.at(r, col, kEnvChannel);
        if (!pre(r, col))
          for (int k = 0; k < kStateChannels; ++k) dead_ok = dead_ok && next.at(r, col, k) == 0.f;
      }
  }
  check(env_ok, "env immutability");
  check(dead_ok, "dead-stay-zero");

  // A signal lasts exactly one step.
  {
    CellGrid seed = make_seed<float>(c, Genome{{1, 0}}, {8, 8});
    Rng a(1);
    const auto traj = rollout(seed, params, 3, {{0, SignalEvent{{8, 8}, 0}}}, StepConfig{}, a, true);
    bool cleared = true;
    for (std::size_t t = 1; t < traj.size(); ++t)
      for (int r = 0; r < c.height; ++r)
        for (int col = 0; col < c.width; ++col)
          cleared = cleared && traj[t].at(r, col, kEnvChannel) == 0.f;
    Simulation<float> sim(seed, params, StepConfig{}, Rng(1));
    sim.signal({8, 8});
    const bool visible = sim.state().at(8, 8, kEnvChannel) == 1.f;
    sim.step();
    check(cleared && visible && sim.state().at(8, 8, kEnvChannel) == 0.f, "one-step signal");
  }

  // Fire rate statistic.
  long fired = 0;
  const int masks = 250;
  for (int i = 0; i < masks; ++i)
    for (auto v : sample_fire_mask(20, 20, 0.5, rng).values) fired += v;
  const double rate = static_cast<double>(fired) / (masks * 400.0);
  check(std::abs(rate - 0.5) <= 0.02, "fire rate");

  // Checkpoint round trip.
  {
    Checkpoint ckpt;
    ckpt.grid = c;
    ckpt.params = params;
    ckpt.metadata.regime = "signal";
    const std::string text = to_json_string(ckpt);
    const Checkpoint back = from_json_string(text);
    check(back == ckpt && to_json_string(back) == text &&
              weight_bytes(back.params) == weight_bytes(ckpt.params),
          "checkpoint round trip");
  }

  // Deterministic replay.
  {
    const CellGrid seed = make_seed<float>(c, Genome{{0, 1}}, {8, 8});
    const Schedule events{{5, SignalEvent{{8, 8}, 2}}, {9, DamageMask::circle(8, 8, 2)}};
    Rng a(77), b(77);
    const auto x = rollout(seed, params, 20, events, StepConfig{}, a, true);
    const auto y = rollout(seed, params, 20, events, StepConfig{}, b, true);
    Rng d(77);
    const auto [final_state, tape] = forward_recorded(seed, params, 20, events, StepConfig{}, d);
    check(x == y && final_state == x.back() && replay(tape, params, false) == final_state,
          "deterministic replay");
  }

  std::string detail = fmt("fire rate %.4f", rate);
  if (failed.empty()) return {true, detail + "; all 6 invariants hold"};
  for (const auto& f : failed) detail += "; FAILED " + f;
  return {false, detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--out-dir", out_dir, "save trained checkpoints here");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness},
      {2, "growing convergence", growing_convergence},
      {3, "internal-signal discrimination", internal_signal_discrimination},
      {4, "multi-genome capacity", multi_genome_capacity},
      {5, "persistence", persistence},
      {6, "regeneration", regeneration},
      {7, "signal toggling", signal_toggling},
      {8, "structural invariants", structural_invariants},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d (%s): %s  [%.0fs] %s\n", c.id, c.name, o.passed ? "PASS" : "FAIL",
                secs, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.passed;
  }
  return failures == 0 ? 0 : 1;
}
