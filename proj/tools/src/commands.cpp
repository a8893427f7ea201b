#include "nca_cli/commands.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "nca/checkpoint.hpp"
#include "nca/grid_io.hpp"
#include "nca/png_io.hpp"
#include "nca/presets.hpp"
#include "nca/training.hpp"

namespace nca::cli {
namespace fs = std::filesystem;

namespace {

int to_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const int value = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw UsageError("bad " + what + " '" + text + "'");
  }
}

double to_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw UsageError("bad " + what + " '" + text + "'");
  }
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) parts.push_back(part);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", index);
  return buf;
}

void print_losses(std::ostream& out, int t, const std::string& label,
                  const std::vector<TargetLoss>& losses) {
  out << "t=" << t << ' ' << label;
  if (losses.empty()) {
    out << '\n';
    return;
  }
  out << "  closest=" << closest(losses).target_id;
  for (const auto& l : losses) out << "  " << l.target_id << '=' << std::setprecision(6) << l.loss;
  out << '\n';
}

std::optional<Preset> try_preset(const Checkpoint& ckpt, std::ostream& err) {
  if (ckpt.metadata.preset.empty()) return std::nullopt;
  try {
    return preset_for(ckpt);
  } catch (const std::exception& e) {
    err << "warning: " << e.what() << "; target losses disabled\n";
    return std::nullopt;
  }
}

Genome genome_arg(const std::string& text, const Checkpoint& ckpt) {
  Genome genome;
  if (!text.empty()) {
    try {
      genome = parse_genome(text);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (static_cast<int>(genome.size()) != ckpt.grid.genome_len) {
    throw UsageError("genome has " + std::to_string(genome.size()) +
                     " values but the checkpoint expects " +
                     std::to_string(ckpt.grid.genome_len));
  }
  return genome;
}

void note_family(std::ostream& out, const std::optional<Preset>& preset, const Genome& genome) {
  if (!preset || genome.size() == 0) return;
  const FamilyLookup hit = preset->family.lookup(genome);
  if (hit.in_training) {
    out << "genome " << genome.to_string() << " -> " << hit.target_id << '\n';
  } else {
    out << "genome " << genome.to_string() << " is outside the training family\n";
  }
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string regime;
  std::string preset;
  int iters = -1;
  double lr = -1;
  int lr_decay_at = 0;
  std::string size;
  int hidden = -1;
  std::string steps;
  std::uint64_t seed = 1;
  int batch = -1;
  int snapshot_every = 0;
  std::string out;
  std::string csv;
};

int cmd_train(const TrainArgs& args, std::ostream& out) {
  SizeArg size{40, 40};
  if (!args.size.empty()) size = parse_size(args.size);
  Preset preset = make_preset(args.preset, size.height, size.width);
  TrainConfig config = preset.train;
  config.regime = parse_regime(args.regime);
  if (config.regime == Regime::signal && !preset.signal) {
    throw UsageError("preset '" + preset.name + "' has no signal targets");
  }
  if (config.regime != Regime::signal && preset.signal) {
    throw UsageError("preset '" + preset.name + "' needs --regime signal");
  }
  if (args.iters >= 0) config.iterations = args.iters;
  if (args.lr > 0) config.learning_rate = args.lr;
  if (args.lr_decay_at < 0) throw UsageError("--lr-decay-at must be non-negative");
  if (args.lr_decay_at > 0) config.lr_decay_iteration = args.lr_decay_at;
  if (args.hidden > 0) config.hidden_size = args.hidden;
  if (args.batch > 0) config.batch_size = args.batch;
  if (!args.steps.empty()) {
    const StepRange range = parse_step_range(args.steps);
    config.steps_min = range.min;
    config.steps_max = range.max;
  }
  config.seed = args.seed;
  if (config.regime == Regime::signal) {
    if (config.batch_size != 12) out << "signal regime: batch size forced to 12\n";
    config.batch_size = 12;
    config.worst_replace = 3;
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const std::string csv_path = args.csv.empty() ? loss_csv_path(args.out) : args.csv;
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "iteration,mean_loss,min_loss,max_loss\n" << std::setprecision(9);

  const int report_every = std::max(1, config.iterations / 20);
  const GridConfig grid = preset.grid;
  auto observer = [&](const IterationStats& s, const ModelParams<float>& params) {
    csv << s.iteration << ',' << s.mean_loss << ',' << s.min_loss << ',' << s.max_loss << '\n';
    if ((s.iteration + 1) % report_every == 0) {
      out << "iter " << s.iteration + 1 << "/" << config.iterations
          << "  loss " << std::setprecision(5) << s.mean_loss << '\n';
    }
    if (args.snapshot_every > 0 && (s.iteration + 1) % args.snapshot_every == 0) {
      Checkpoint snap{kCheckpointVersion, grid, config.fire_rate, params, {}};
      snap.metadata.regime = to_string(config.regime);
      snap.metadata.family = preset.family.name;
      snap.metadata.iterations = s.iteration + 1;
      snap.metadata.seed = config.seed;
      save_checkpoint(tag_checkpoint(snap, preset), args.out);
    }
  };

  out << "training " << preset.name << " (" << to_string(config.regime) << ", "
      << grid.height << "x" << grid.width << ", hidden " << config.hidden_size << ", batch "
      << config.batch_size << ", " << config.iterations << " iterations)\n";
  TrainResult result = train(preset.family, grid, config, preset.signal, observer);
  csv.close();
  save_checkpoint(tag_checkpoint(result.checkpoint, preset), args.out);
  out << "wrote " << args.out << " and " << csv_path << '\n';
  if (!result.history.empty()) {
    out << "final mean loss " << std::setprecision(6) << result.history.back().mean_loss << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------- grow

struct GrowArgs {
  std::string ckpt;
  std::string genome;
  int steps = 200;
  std::string frames;
  int every = 1;
  std::uint64_t seed = 1;
  std::string dump;
};

int cmd_grow(const GrowArgs& args, std::ostream& out, std::ostream& err) {
  if (args.steps < 0) throw UsageError("--steps must be non-negative");
  if (args.every < 1) throw UsageError("--every must be positive");
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  const Genome genome = genome_arg(args.genome, ckpt);
  const std::optional<Preset> preset = try_preset(ckpt, err);
  note_family(out, preset, genome);

  if (!args.frames.empty()) fs::create_directories(args.frames);
  CellGrid seed = make_seed<float>(ckpt.grid, genome, seed_position(ckpt.grid));
  Simulation<float> sim(std::move(seed), ckpt.params, StepConfig{ckpt.fire_rate}, Rng(args.seed));
  int frames = 0;
  auto snap = [&] {
    if (args.frames.empty()) return;
    write_png(fs::path(args.frames) / frame_name(sim.time()), to_rgba8(sim.state()));
    ++frames;
  };
  snap();
  for (int t = 1; t <= args.steps; ++t) {
    sim.step();
    if (t % args.every == 0 || t == args.steps) snap();
  }
  if (!sim.state().all_finite()) throw std::runtime_error("state became non-finite");
  if (!args.dump.empty()) write_channel_dump(args.dump, sim.state());
  if (!args.frames.empty()) out << "wrote " << frames << " frames to " << args.frames << '\n';
  if (preset) print_losses(out, sim.time(), "final", losses_against(sim.state(), preset->targets()));
  return kOk;
}

// ---------------------------------------------------------------- poke

struct PokeArgs {
  std::string ckpt;
  std::string genome;
  int grow = 200;
  std::vector<std::string> signals;
  std::vector<std::string> damages;
  int steps_after = 150;
  int jitter = 0;
  std::string frames;
  int every = 1;
  std::uint64_t seed = 1;
};

int cmd_poke(const PokeArgs& args, std::ostream& out, std::ostream& err) {
  if (args.grow < 0 || args.steps_after < 1) {
    throw UsageError("--grow must be >= 0 and --steps-after >= 1");
  }
  if (args.every < 1) throw UsageError("--every must be positive");
  if (args.jitter < 0) throw UsageError("--jitter must be non-negative");
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  const Genome genome = genome_arg(args.genome, ckpt);
  if (!args.signals.empty() && !ckpt.grid.env_enabled) {
    throw UsageError("checkpoint has no environment channel; --signal-at is unavailable");
  }

  std::multimap<int, SignalArg> signals;
  std::multimap<int, DamageArg> damages;
  auto check_time = [&](int t, const std::string& text) {
    if (t < 0 || t >= args.steps_after) {
      throw UsageError("event '" + text + "' is outside [0, " + std::to_string(args.steps_after) +
                       ")");
    }
  };
  for (const auto& text : args.signals) {
    const SignalArg s = parse_signal(text);
    check_time(s.time, text);
    if (s.y < 0 || s.y >= ckpt.grid.height || s.x < 0 || s.x >= ckpt.grid.width) {
      throw UsageError("signal '" + text + "' lies outside the grid");
    }
    signals.emplace(s.time, s);
  }
  for (const auto& text : args.damages) {
    const DamageArg d = parse_damage(text);
    check_time(d.time, text);
    if (!(d.radius > 0)) throw UsageError("damage radius must be positive");
    damages.emplace(d.time, d);
  }

  const std::optional<Preset> preset = try_preset(ckpt, err);
  const auto targets = preset ? preset->targets() : std::map<std::string, const TargetImage*>{};
  note_family(out, preset, genome);
  if (!args.frames.empty()) fs::create_directories(args.frames);

  CellGrid seed = make_seed<float>(ckpt.grid, genome, seed_position(ckpt.grid));
  Simulation<float> sim(std::move(seed), ckpt.params, StepConfig{ckpt.fire_rate}, Rng(args.seed));
  auto snap = [&] {
    if (!args.frames.empty()) {
      write_png(fs::path(args.frames) / frame_name(sim.time()), to_rgba8(sim.state()));
    }
  };
  auto losses = [&] { return losses_against(sim.state(), targets); };

  snap();
  for (int t = 1; t <= args.grow; ++t) {
    sim.step();
    if (t % args.every == 0) snap();
  }
  print_losses(out, sim.time(), "grown", losses());

  for (int rel = 0; rel < args.steps_after; ++rel) {
    const auto [d0, d1] = damages.equal_range(rel);
    const auto [s0, s1] = signals.equal_range(rel);
    if (d0 != d1 || s0 != s1) {
      if (rel > 0) print_losses(out, sim.time(), "before events", losses());
      for (auto it = d0; it != d1; ++it) {
        const DamageArg& d = it->second;
        const std::size_t erased = sim.damage(DamageMask::circle(d.cy, d.cx, d.radius));
        out << "t=" << sim.time() << " damage at (" << d.cx << ',' << d.cy << ") r=" << d.radius
            << ", " << erased << " cells erased\n";
      }
      for (auto it = s0; it != s1; ++it) {
        const Cell hit = sim.signal({it->second.y, it->second.x}, args.jitter);
        out << "t=" << sim.time() << " signal at (" << hit.col << ',' << hit.row << ")\n";
      }
    }
    sim.step();
    if (sim.time() % args.every == 0 || rel + 1 == args.steps_after) snap();
  }
  if (!sim.state().all_finite()) throw std::runtime_error("state became non-finite");
  print_losses(out, sim.time(), "final", losses());
  return kOk;
}

// ---------------------------------------------------------------- vectors

struct VectorArgs {
  std::string ckpt;
  int count = 20;
  std::uint64_t seed = 1;
  std::string out;
};

nlohmann::json tensor_json(const CellGrid& grid) {
  std::vector<std::uint8_t> bytes(grid.data().size() * 4);
  std::size_t k = 0;
  for (float v : grid.data()) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    for (int b = 0; b < 4; ++b) bytes[k++] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  return {{"shape", {grid.height(), grid.width(), grid.channels()}},
          {"data", base64_encode(bytes)}};
}

int cmd_vectors(const VectorArgs& args, std::ostream& out, std::ostream& err) {
  if (args.count < 1) throw UsageError("--count must be positive");
  const Checkpoint ckpt = load_checkpoint(args.ckpt);
  const std::optional<Preset> preset = try_preset(ckpt, err);
  Rng rng(args.seed);
  nlohmann::json cases = nlohmann::json::array();
  for (int i = 0; i < args.count; ++i) {
    Genome genome;
    if (preset && !preset->family.members.empty()) {
      genome = preset->family.members[i % preset->family.members.size()].genome;
    } else {
      genome.bits.assign(ckpt.grid.genome_len, 0.0);
      for (auto& b : genome.bits) b = static_cast<double>(rng() & 1);
    }
    const int grown = static_cast<int>(rng() % 121);
    CellGrid input = grow(ckpt.params, ckpt.grid, genome, grown, ckpt.fire_rate, rng());
    Cell signalled{-1, -1};
    if (ckpt.grid.env_enabled && i % 2 == 1) {
      signalled = inject_signal(input, seed_position(ckpt.grid), 3, rng);
    }
    CellMask fire = i % 5 == 4 ? CellMask(ckpt.grid.height, ckpt.grid.width, 1)
                               : sample_fire_mask(ckpt.grid.height, ckpt.grid.width,
                                                  ckpt.fire_rate, rng);
    const CellGrid expected = step(input, ckpt.params, fire);
    std::string fire_bits(fire.values.size(), '0');
    for (std::size_t k = 0; k < fire.values.size(); ++k) {
      if (fire.values[k]) fire_bits[k] = '1';
    }
    char id[16];
    std::snprintf(id, sizeof id, "case-%02d", i);
    nlohmann::json c = {{"id", id},
                        {"genome", genome.to_string()},
                        {"grown_steps", grown},
                        {"input", tensor_json(input)},
                        {"fire", fire_bits},
                        {"expected", tensor_json(expected)}};
    if (signalled.row >= 0) c["signal"] = {signalled.col, signalled.row};
    cases.push_back(std::move(c));
  }
  nlohmann::json doc = {{"format", "nca-test-vectors"},
                        {"version", 1},
                        {"tolerance", 1e-5},
                        {"checkpoint", nlohmann::json::parse(to_json_string(ckpt))},
                        {"cases", std::move(cases)}};
  std::ofstream file(args.out, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write " + args.out);
  file << doc.dump(1) << '\n';
  if (!file) throw std::runtime_error("failed writing " + args.out);
  out << "wrote " << args.count << " cases to " << args.out << '\n';
  return kOk;
}

}  // namespace

SizeArg parse_size(const std::string& text) {
  const auto parts = split(text, 'x');
  if (parts.size() != 2) throw UsageError("size must look like HxW, got '" + text + "'");
  SizeArg s{to_int(parts[0], "height"), to_int(parts[1], "width")};
  if (s.height < 3 || s.width < 3) throw UsageError("grid must be at least 3x3");
  return s;
}

StepRange parse_step_range(const std::string& text) {
  const auto parts = split(text, ':');
  StepRange r;
  if (parts.size() == 1) {
    r.min = r.max = to_int(parts[0], "step count");
  } else if (parts.size() == 2) {
    r.min = to_int(parts[0], "step count");
    r.max = to_int(parts[1], "step count");
  } else {
    throw UsageError("steps must look like A:B, got '" + text + "'");
  }
  if (r.min < 1 || r.min > r.max) throw UsageError("steps must satisfy 1 <= A <= B");
  return r;
}

SignalArg parse_signal(const std::string& text) {
  const auto at = split(text, '@');
  if (at.size() != 2) throw UsageError("signal must look like x,y@t, got '" + text + "'");
  const auto xy = split(at[0], ',');
  if (xy.size() != 2) throw UsageError("signal must look like x,y@t, got '" + text + "'");
  return {to_int(xy[0], "x"), to_int(xy[1], "y"), to_int(at[1], "time")};
}

DamageArg parse_damage(const std::string& text) {
  const auto at = split(text, '@');
  if (at.size() != 2) throw UsageError("damage must look like cx,cy,r@t, got '" + text + "'");
  const auto parts = split(at[0], ',');
  if (parts.size() != 3) throw UsageError("damage must look like cx,cy,r@t, got '" + text + "'");
  return {to_double(parts[0], "cx"), to_double(parts[1], "cy"), to_double(parts[2], "radius"),
          to_int(at[1], "time")};
}

std::string loss_csv_path(const std::string& checkpoint_path) {
  fs::path p(checkpoint_path);
  std::string name = p.filename().string();
  const std::string suffix = ".nca.json";
  if (name.size() > suffix.size() && name.ends_with(suffix)) {
    name.resize(name.size() - suffix.size());
  } else {
    name = p.stem().string();
  }
  return (p.parent_path() / (name + ".loss.csv")).string();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural cellular automata: train, grow and poke organisms"};
  app.require_subcommand(1);
  const std::vector<std::string> presets = preset_names();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model on a preset");
  train->add_option("--regime", train_args.regime, "growing|persistent|regenerating|signal")
      ->required()
      ->check(CLI::IsMember({"growing", "persistent", "regenerating", "signal"}));
  train->add_option("--preset", train_args.preset, "experiment preset")
      ->required()
      ->check(CLI::IsMember(presets));
  train->add_option("--iters", train_args.iters, "optimizer iterations");
  train->add_option("--lr", train_args.lr, "learning rate");
  train->add_option("--lr-decay-at", train_args.lr_decay_at,
                    "iteration at which the learning rate drops tenfold");
  train->add_option("--size", train_args.size, "grid size HxW (default 40x40)");
  train->add_option("--hidden", train_args.hidden, "hidden layer width");
  train->add_option("--steps", train_args.steps, "rollout length range A:B");
  train->add_option("--batch", train_args.batch, "batch size (signal regime: always 12)");
  train->add_option("--seed", train_args.seed, "rng seed");
  train->add_option("--snapshot-every", train_args.snapshot_every,
                    "rewrite the checkpoint every N iterations");
  train->add_option("--out", train_args.out, "checkpoint path (.nca.json)")->required();
  train->add_option("--csv", train_args.csv, "loss history path (default <out>.loss.csv)");

  GrowArgs grow_args;
  auto* grow = app.add_subcommand("grow", "grow an organism from a seed");
  grow->add_option("--ckpt", grow_args.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  grow->add_option("--genome", grow_args.genome, "seed genome, e.g. 0010 or 0.5");
  grow->add_option("--steps", grow_args.steps, "update steps");
  grow->add_option("--frames", grow_args.frames, "directory for PNG frames");
  grow->add_option("--every", grow_args.every, "frame interval");
  grow->add_option("--seed", grow_args.seed, "rng seed");
  grow->add_option("--dump", grow_args.dump, "write the final state as a channel dump");

  PokeArgs poke_args;
  auto* poke = app.add_subcommand("poke", "grow, then deliver signals and damage");
  poke->add_option("--ckpt", poke_args.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  poke->add_option("--genome", poke_args.genome, "seed genome");
  poke->add_option("--grow", poke_args.grow, "steps before the event window");
  poke->add_option("--signal-at", poke_args.signals, "x,y@t, t relative to the end of growth");
  poke->add_option("--damage", poke_args.damages, "cx,cy,r@t, t relative to the end of growth");
  poke->add_option("--steps-after", poke_args.steps_after, "steps after growth");
  poke->add_option("--jitter", poke_args.jitter, "signal jitter radius");
  poke->add_option("--frames", poke_args.frames, "directory for PNG frames");
  poke->add_option("--every", poke_args.every, "frame interval");
  poke->add_option("--seed", poke_args.seed, "rng seed");

  VectorArgs vector_args;
  auto* vectors = app.add_subcommand("vectors", "emit single-step test vectors for a checkpoint");
  vectors->add_option("--ckpt", vector_args.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  vectors->add_option("--count", vector_args.count, "number of cases");
  vectors->add_option("--seed", vector_args.seed, "rng seed");
  vectors->add_option("--out", vector_args.out, "output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kOk;
    for (const CLI::App* sub : app.get_subcommands()) err << sub->help();
    return kUsage;
  }

  try {
    if (*train) return cmd_train(train_args, out);
    if (*grow) return cmd_grow(grow_args, out, err);
    if (*poke) return cmd_poke(poke_args, out, err);
    if (*vectors) return cmd_vectors(vector_args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace nca::cli
