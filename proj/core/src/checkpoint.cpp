#include "nca/checkpoint.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace nca {
namespace {

using nlohmann::json;
using Kind = CheckpointError::Kind;

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

void append_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(bits >> shift));
  }
}

std::vector<float> floats_from_bytes(const std::vector<std::uint8_t>& bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t(bytes[4 * i + b]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

json encode_array(std::span<const float> values, std::vector<std::int64_t> shape) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(values.size() * 4);
  append_floats(bytes, values);
  return json{{"shape", shape}, {"data", base64_encode(bytes)}};
}

template <class T>
T require(const json& object, const char* key) {
  if (!object.contains(key)) throw CheckpointError(Kind::parse, std::string("missing field '") + key + "'");
  try {
    return object.at(key).get<T>();
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::parse, std::string("bad field '") + key + "': " + e.what());
  }
}

std::vector<float> decode_array(const json& weights, const char* name,
                                std::vector<std::int64_t> expected_shape) {
  if (!weights.contains(name)) {
    throw CheckpointError(Kind::parse, std::string("missing weight array '") + name + "'");
  }
  const json& entry = weights.at(name);
  const auto shape = require<std::vector<std::int64_t>>(entry, "shape");
  if (shape != expected_shape) {
    throw CheckpointError(Kind::shape, std::string("weight array '") + name +
                                           "' has a shape inconsistent with the grid/hidden size");
  }
  std::vector<std::uint8_t> bytes;
  try {
    bytes = base64_decode(require<std::string>(entry, "data"));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(Kind::checksum,
                          std::string("weight array '") + name + "' is corrupt: " + e.what());
  }
  std::int64_t count = 1;
  for (auto d : shape) count *= d;
  if (bytes.size() != static_cast<std::size_t>(count) * 4) {
    throw CheckpointError(Kind::shape, std::string("weight array '") + name + "' holds " +
                                           std::to_string(bytes.size() / 4) + " values, expected " +
                                           std::to_string(count));
  }
  return floats_from_bytes(bytes);
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t(bytes[i]) << 16) | (std::uint32_t(bytes[i + 1]) << 8) | bytes[i + 2];
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = std::uint32_t(bytes[i]) << 16;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t n = (std::uint32_t(bytes[i]) << 16) | (std::uint32_t(bytes[i + 1]) << 8);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64 length is not a multiple of 4");
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);

  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    if (last) {
      if (text[i + 3] == '=') ++pad;
      if (text[i + 2] == '=') ++pad;
      if (pad == 1 && text[i + 2] == '=') throw std::invalid_argument("misplaced base64 padding");
    }
    std::uint32_t n = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      int value = 0;
      if (k >= 4 - pad) {
        value = 0;
      } else {
        value = lookup[static_cast<unsigned char>(ch)];
        if (value < 0) throw std::invalid_argument("invalid base64 character");
      }
      n = (n << 6) | static_cast<std::uint32_t>(value);
    }
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(n >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n));
    if ((pad == 1 && (n & 0xFF) != 0) || (pad == 2 && (n & 0xFFFF) != 0)) {
      throw std::invalid_argument("non-canonical base64 trailing bits");
    }
  }
  return out;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32_z(crc, bytes.data(), bytes.size());
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> weight_bytes(const ModelParams<float>& params) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(params.parameter_count() * 4);
  for (const auto& [name, block] : params.blocks()) append_floats(bytes, block);
  return bytes;
}

std::string to_json_string(const Checkpoint& checkpoint) {
  const ModelParams<float>& p = checkpoint.params;
  p.validate();
  if (p.perception_size() != checkpoint.grid.perception_size()) {
    throw CheckpointError(Kind::shape, "model input does not match the grid channel count");
  }
  json members = json::array();
  for (const auto& m : checkpoint.metadata.members) {
    members.push_back({{"genome", m.genome}, {"target", m.target_id}});
  }
  const json doc = {
      {"format", "nca-checkpoint"},
      {"version", checkpoint.version},
      {"grid",
       {{"height", checkpoint.grid.height},
        {"width", checkpoint.grid.width},
        {"channels", checkpoint.grid.channels()},
        {"env_enabled", checkpoint.grid.env_enabled},
        {"genome_len", checkpoint.grid.genome_len},
        {"alive_threshold", checkpoint.grid.alive_threshold}}},
      {"model",
       {{"perception_size", p.perception_size()},
        {"hidden_size", p.hidden_size()},
        {"output_size", kStateChannels},
        {"fire_rate", checkpoint.fire_rate},
        {"perception", "identity,sobel_x,sobel_y"}}},
      {"weights",
       {{"w1", encode_array({p.w1.data(), static_cast<std::size_t>(p.w1.size())},
                            {p.w1.rows(), p.w1.cols()})},
        {"b1", encode_array({p.b1.data(), static_cast<std::size_t>(p.b1.size())}, {p.b1.size()})},
        {"w2", encode_array({p.w2.data(), static_cast<std::size_t>(p.w2.size())},
                            {p.w2.rows(), p.w2.cols()})},
        {"b2", encode_array({p.b2.data(), static_cast<std::size_t>(p.b2.size())}, {p.b2.size()})}}},
      {"checksum", crc32(weight_bytes(p))},
      {"metadata",
       {{"regime", checkpoint.metadata.regime},
        {"preset", checkpoint.metadata.preset},
        {"family", checkpoint.metadata.family},
        {"members", members},
        {"iterations", checkpoint.metadata.iterations},
        {"seed", checkpoint.metadata.seed}}},
  };
  return doc.dump(2) + "\n";
}

Checkpoint from_json_string(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(Kind::parse, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw CheckpointError(Kind::parse, "checkpoint must be a JSON object");

  Checkpoint ckpt;
  ckpt.version = require<int>(doc, "version");
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError(Kind::version, "unsupported checkpoint version " +
                                             std::to_string(ckpt.version) + " (expected " +
                                             std::to_string(kCheckpointVersion) + ")");
  }

  const json grid = require<json>(doc, "grid");
  ckpt.grid.height = require<int>(grid, "height");
  ckpt.grid.width = require<int>(grid, "width");
  ckpt.grid.env_enabled = require<bool>(grid, "env_enabled");
  ckpt.grid.genome_len = require<int>(grid, "genome_len");
  ckpt.grid.alive_threshold = require<double>(grid, "alive_threshold");
  const int channels = require<int>(grid, "channels");
  if (channels != ckpt.grid.channels()) {
    throw CheckpointError(Kind::shape, "channel count " + std::to_string(channels) +
                                           " disagrees with env_enabled");
  }
  try {
    ckpt.grid.validate();
  } catch (const GridError& e) {
    throw CheckpointError(Kind::shape, e.what());
  }

  const json model = require<json>(doc, "model");
  const int perception = require<int>(model, "perception_size");
  const int hidden = require<int>(model, "hidden_size");
  if (perception != ckpt.grid.perception_size() || hidden <= 0 ||
      require<int>(model, "output_size") != kStateChannels) {
    throw CheckpointError(Kind::shape, "model dimensions inconsistent with the grid");
  }
  ckpt.fire_rate = require<double>(model, "fire_rate");

  const json weights = require<json>(doc, "weights");
  const auto w1 = decode_array(weights, "w1", {perception, hidden});
  const auto b1 = decode_array(weights, "b1", {hidden});
  const auto w2 = decode_array(weights, "w2", {hidden, kStateChannels});
  const auto b2 = decode_array(weights, "b2", {kStateChannels});
  ckpt.params = ModelParams<float>::zeros(perception, hidden);
  std::copy(w1.begin(), w1.end(), ckpt.params.w1.data());
  std::copy(b1.begin(), b1.end(), ckpt.params.b1.data());
  std::copy(w2.begin(), w2.end(), ckpt.params.w2.data());
  std::copy(b2.begin(), b2.end(), ckpt.params.b2.data());

  const auto stored = require<std::uint32_t>(doc, "checksum");
  if (stored != crc32(weight_bytes(ckpt.params))) {
    throw CheckpointError(Kind::checksum, "weight checksum mismatch");
  }

  if (doc.contains("metadata")) {
    const json& meta = doc.at("metadata");
    ckpt.metadata.regime = meta.value("regime", "");
    ckpt.metadata.preset = meta.value("preset", "");
    ckpt.metadata.family = meta.value("family", "");
    ckpt.metadata.iterations = meta.value("iterations", std::int64_t{0});
    ckpt.metadata.seed = meta.value("seed", std::uint64_t{0});
    if (meta.contains("members")) {
      for (const auto& m : meta.at("members")) {
        ckpt.metadata.members.push_back({m.value("genome", ""), m.value("target", "")});
      }
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string text = to_json_string(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(Kind::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw CheckpointError(Kind::io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json_string(buffer.str());
}

}  // namespace nca
