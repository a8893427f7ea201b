#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace nca {

using Rng = std::mt19937_64;

/// Number of channels the update network writes. The optional environment
/// channel sits after these and is read-only.
inline constexpr int kStateChannels = 16;
inline constexpr int kAlphaChannel = 3;
inline constexpr int kGenomeChannel = 4;
inline constexpr int kEnvChannel = 16;

class GridError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GridConfig {
  int height = 40;
  int width = 40;
  bool env_enabled = false;
  int genome_len = 0;
  double alive_threshold = 0.1;

  int channels() const noexcept { return kStateChannels + (env_enabled ? 1 : 0); }
  int perception_size() const noexcept { return 3 * channels(); }
  std::size_t cell_count() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }

  /// Throws GridError when the configuration violates an invariant.
  void validate() const;

  bool operator==(const GridConfig&) const = default;
};

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

/// Length-n genome written into channels c4..c4+n-1 of the seed. Values are
/// real so that fractional probes (e.g. 0.5) go through the same path.
struct Genome {
  std::vector<double> bits;

  std::size_t size() const noexcept { return bits.size(); }
  std::string to_string() const;
  bool operator==(const Genome&) const = default;
};

/// Parses "0010" (one digit per bit) or a comma separated list of reals ("0.5"
/// or "1,0.5").
Genome parse_genome(const std::string& text);

/// H x W boolean plane stored as bytes.
struct CellMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  CellMask() = default;
  CellMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  bool operator()(int row, int col) const { return values[index(row, col)] != 0; }
  std::uint8_t& at(int row, int col) { return values[index(row, col)]; }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width + col;
  }
  std::size_t count() const;
  bool operator==(const CellMask&) const = default;
};

/// Dense H x W x C state, row-major with channels innermost.
template <class Real>
class BasicGrid {
 public:
  using value_type = Real;

  BasicGrid() = default;
  explicit BasicGrid(const GridConfig& config);

  const GridConfig& config() const noexcept { return config_; }
  int height() const noexcept { return config_.height; }
  int width() const noexcept { return config_.width; }
  int channels() const noexcept { return channels_; }
  bool contains(int row, int col) const noexcept {
    return row >= 0 && row < config_.height && col >= 0 && col < config_.width;
  }

  std::size_t offset(int row, int col) const noexcept {
    return (static_cast<std::size_t>(row) * config_.width + col) * channels_;
  }
  Real& at(int row, int col, int channel) { return data_[offset(row, col) + channel]; }
  Real at(int row, int col, int channel) const { return data_[offset(row, col) + channel]; }

  std::span<Real> cell(int row, int col) {
    return {data_.data() + offset(row, col), static_cast<std::size_t>(channels_)};
  }
  std::span<const Real> cell(int row, int col) const {
    return {data_.data() + offset(row, col), static_cast<std::size_t>(channels_)};
  }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }

  bool all_finite() const;

  template <class To>
  BasicGrid<To> cast() const {
    BasicGrid<To> out(config_);
    auto dst = out.data();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<To>(data_[i]);
    return out;
  }

  bool operator==(const BasicGrid&) const = default;

 private:
  GridConfig config_{};
  int channels_ = 0;
  std::vector<Real> data_;
};

using CellGrid = BasicGrid<float>;
using CellGridF64 = BasicGrid<double>;

struct CircleDamage {
  double center_row = 0;
  double center_col = 0;
  double radius = 0;
};

struct RectDamage {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
};

/// Region to erase, in cell coordinates. Parts outside the grid are ignored.
struct DamageMask {
  std::variant<CircleDamage, RectDamage> shape;

  static DamageMask circle(double center_row, double center_col, double radius) {
    return {CircleDamage{center_row, center_col, radius}};
  }
  static DamageMask rect(int row, int col, int height, int width) {
    return {RectDamage{row, col, height, width}};
  }

  bool covers(int row, int col) const;
};

template <class Real>
BasicGrid<Real> make_seed(const GridConfig& config, const Genome& genome, Cell position);

/// A cell is alive when the max alpha in its zero-padded 3x3 neighborhood is
/// strictly above the threshold.
template <class Real>
CellMask alive_mask(const BasicGrid<Real>& grid);

/// Zeroes every channel of every covered cell; returns the number of cells
/// erased.
template <class Real>
std::size_t apply_damage(BasicGrid<Real>& grid, const DamageMask& mask);

/// Writes 1 into the environment channel of one cell chosen uniformly from
/// the Chebyshev ball of `jitter_radius` around `position` (clipped to the
/// grid). Returns the cell actually signalled.
template <class Real>
Cell inject_signal(BasicGrid<Real>& grid, Cell position, int jitter_radius, Rng& rng);

template <class Real>
void clear_env(BasicGrid<Real>& grid);

}  // namespace nca
