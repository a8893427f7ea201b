#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nca/grid.hpp"
#include "nca/model.hpp"

namespace nca {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMember {
  std::string genome;  // Genome::to_string()
  std::string target_id;
  bool operator==(const CheckpointMember&) const = default;
};

struct CheckpointMetadata {
  std::string regime;
  std::string preset;
  std::string family;
  std::vector<CheckpointMember> members;
  std::int64_t iterations = 0;
  std::uint64_t seed = 0;
  bool operator==(const CheckpointMetadata&) const = default;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  GridConfig grid;
  double fire_rate = 0.5;
  ModelParams<float> params;
  CheckpointMetadata metadata;

  int hidden_size() const noexcept { return params.hidden_size(); }
  bool operator==(const Checkpoint&) const = default;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, parse, version, shape, checksum };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Canonical text form (`.nca.json`): identical checkpoints serialize to
/// identical bytes. See docs/checkpoint_format.md.
std::string to_json_string(const Checkpoint& checkpoint);
Checkpoint from_json_string(std::string_view text);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Raw little-endian f32 bytes of w1, b1, w2, b2 in that order.
std::vector<std::uint8_t> weight_bytes(const ModelParams<float>& params);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Rejects characters outside the standard alphabet and non-canonical
/// trailing bits; throws std::invalid_argument.
std::vector<std::uint8_t> base64_decode(std::string_view text);
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace nca
