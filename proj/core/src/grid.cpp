#include "nca/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nca {

void GridConfig::validate() const {
  if (height <= 0 || width <= 0) {
    throw GridError("grid dimensions must be positive");
  }
  if (genome_len < 0 || kGenomeChannel + genome_len > kStateChannels) {
    throw GridError("genome length " + std::to_string(genome_len) +
                    " does not fit in the hidden channels");
  }
  if (!(alive_threshold > 0.0 && alive_threshold < 1.0)) {
    throw GridError("alive threshold must lie in (0, 1)");
  }
}

std::string Genome::to_string() const {
  std::ostringstream out;
  bool binary = std::all_of(bits.begin(), bits.end(),
                            [](double b) { return b == 0.0 || b == 1.0; });
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (binary) {
      out << (bits[i] == 1.0 ? '1' : '0');
    } else {
      if (i) out << ',';
      out << bits[i];
    }
  }
  return out.str();
}

Genome parse_genome(const std::string& text) {
  Genome genome;
  if (text.empty()) return genome;
  if (text.find_first_of(".,") == std::string::npos) {
    for (char ch : text) {
      if (ch != '0' && ch != '1') {
        throw GridError("genome digits must be 0 or 1: '" + text + "'");
      }
      genome.bits.push_back(ch == '1' ? 1.0 : 0.0);
    }
    return genome;
  }
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      std::size_t used = 0;
      double value = std::stod(item, &used);
      if (used != item.size() || !std::isfinite(value)) throw std::invalid_argument(item);
      genome.bits.push_back(value);
    } catch (const std::exception&) {
      throw GridError("cannot parse genome value '" + item + "'");
    }
  }
  return genome;
}

std::size_t CellMask::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

template <class Real>
BasicGrid<Real>::BasicGrid(const GridConfig& config)
    : config_(config),
      channels_(config.channels()),
      data_(config.cell_count() * static_cast<std::size_t>(config.channels()), Real(0)) {
  config_.validate();
}

template <class Real>
bool BasicGrid<Real>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

bool DamageMask::covers(int row, int col) const {
  return std::visit(
      [&](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CircleDamage>) {
          double dr = row - s.center_row;
          double dc = col - s.center_col;
          return dr * dr + dc * dc <= s.radius * s.radius;
        } else {
          return row >= s.row && row < s.row + s.height && col >= s.col &&
                 col < s.col + s.width;
        }
      },
      shape);
}

template <class Real>
BasicGrid<Real> make_seed(const GridConfig& config, const Genome& genome, Cell position) {
  BasicGrid<Real> grid(config);
  if (!grid.contains(position.row, position.col)) {
    throw GridError("seed position outside grid");
  }
  if (genome.size() != static_cast<std::size_t>(config.genome_len)) {
    throw GridError("genome length " + std::to_string(genome.size()) +
                    " does not match configured length " +
                    std::to_string(config.genome_len));
  }
  auto cell = grid.cell(position.row, position.col);
  for (int c = kAlphaChannel; c < kStateChannels; ++c) cell[c] = Real(1);
  for (int i = 0; i < config.genome_len; ++i) {
    cell[kGenomeChannel + i] = static_cast<Real>(genome.bits[i]);
  }
  return grid;
}

template <class Real>
CellMask alive_mask(const BasicGrid<Real>& grid) {
  const int h = grid.height();
  const int w = grid.width();
  const Real threshold = static_cast<Real>(grid.config().alive_threshold);
  // Separable max-pool. Zero padding never changes the outcome because the
  // threshold is positive.
  std::vector<Real> alpha(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) alpha[r * w + c] = grid.at(r, c, kAlphaChannel);
  }
  std::vector<Real> rowmax(alpha.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      Real m = alpha[r * w + c];
      if (c > 0) m = std::max(m, alpha[r * w + c - 1]);
      if (c + 1 < w) m = std::max(m, alpha[r * w + c + 1]);
      rowmax[r * w + c] = m;
    }
  }
  CellMask mask(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      Real m = rowmax[r * w + c];
      if (r > 0) m = std::max(m, rowmax[(r - 1) * w + c]);
      if (r + 1 < h) m = std::max(m, rowmax[(r + 1) * w + c]);
      mask.at(r, c) = m > threshold ? 1 : 0;
    }
  }
  return mask;
}

template <class Real>
std::size_t apply_damage(BasicGrid<Real>& grid, const DamageMask& mask) {
  std::size_t erased = 0;
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      if (!mask.covers(r, c)) continue;
      auto cell = grid.cell(r, c);
      std::fill(cell.begin(), cell.end(), Real(0));
      ++erased;
    }
  }
  return erased;
}

template <class Real>
Cell inject_signal(BasicGrid<Real>& grid, Cell position, int jitter_radius, Rng& rng) {
  if (!grid.config().env_enabled) {
    throw GridError("grid has no environment channel");
  }
  if (!grid.contains(position.row, position.col)) {
    throw GridError("signal position outside grid");
  }
  if (jitter_radius < 0) throw GridError("jitter radius must be non-negative");
  Cell actual = position;
  if (jitter_radius > 0) {
    const int r0 = std::max(0, position.row - jitter_radius);
    const int r1 = std::min(grid.height() - 1, position.row + jitter_radius);
    const int c0 = std::max(0, position.col - jitter_radius);
    const int c1 = std::min(grid.width() - 1, position.col + jitter_radius);
    const int rows = r1 - r0 + 1;
    const int cols = c1 - c0 + 1;
    std::uniform_int_distribution<int> pick(0, rows * cols - 1);
    const int k = pick(rng);
    actual = {r0 + k / cols, c0 + k % cols};
  }
  grid.at(actual.row, actual.col, kEnvChannel) = Real(1);
  return actual;
}

template <class Real>
void clear_env(BasicGrid<Real>& grid) {
  if (!grid.config().env_enabled) {
    throw GridError("grid has no environment channel");
  }
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) grid.at(r, c, kEnvChannel) = Real(0);
  }
}

#define NCA_INSTANTIATE_GRID(Real)                                                     \
  template class BasicGrid<Real>;                                                      \
  template BasicGrid<Real> make_seed<Real>(const GridConfig&, const Genome&, Cell);    \
  template CellMask alive_mask<Real>(const BasicGrid<Real>&);                          \
  template std::size_t apply_damage<Real>(BasicGrid<Real>&, const DamageMask&);        \
  template Cell inject_signal<Real>(BasicGrid<Real>&, Cell, int, Rng&);                \
  template void clear_env<Real>(BasicGrid<Real>&);

NCA_INSTANTIATE_GRID(float)
NCA_INSTANTIATE_GRID(double)

#undef NCA_INSTANTIATE_GRID

}  // namespace nca
