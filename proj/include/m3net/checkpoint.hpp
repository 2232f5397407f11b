#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m3net/nn.hpp"

namespace m3net {

/// Little-endian wire format: "M3NT", u32 version, u32 tensor count; per
/// tensor u16 name length, name bytes, u8 rank, rank × u64 dims, float32
/// payload; trailing u32 step.
struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  static constexpr const char* kConfigName = "__config__";

  std::vector<CheckpointTensor> tensors;
  std::string config_text;  // stored as the __config__ tensor, one byte per element
  std::uint32_t step = 0;

  static Checkpoint from_parameters(const ParameterList& params, const std::string& config_text,
                                    std::uint32_t step);
  /// Copies values into same-named, same-shaped parameters; every parameter
  /// must be present.
  void apply_to(const ParameterList& params) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to the nearest float32 so a saved checkpoint and
/// the in-memory model agree exactly.
void round_to_float32(const ParameterList& params);

}  // namespace m3net
