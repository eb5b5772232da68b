#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "conrad/config.hpp"
#include "conrad/optimizer.hpp"

namespace conrad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little-endian): "CRAD", u32 version, u64 config length,
/// config JSON, u64 step, u64 n_params, f32 params, u32 optimizer kind,
/// u64 optimizer step, then four (u64 length, f32 values) optimizer vectors
/// m, v, n, prev_grad.
struct Checkpoint {
  std::string config_json;  // kept verbatim so save/load/save is bitwise stable
  std::uint64_t step = 0;   // completed optimizer steps
  std::vector<float> params;
  OptimizerKind optimizer = OptimizerKind::kAdan;
  OptimizerState optimizer_state;

  TrainConfig config() const { return train_config_from_json(config_json); }
  bool operator==(const Checkpoint&) const = default;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError with kBadMagic, kVersionMismatch, kTruncated or kMalformed.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace conrad
