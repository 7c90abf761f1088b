#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "belt2/nn/params.hpp"

namespace belt2 {

/// Checkpoint directory layout:
///   manifest.json  {format, config, seed, epoch, metric, extra,
///                   params: [{name, shape, offset, trainable}]}
///   params.bin     little-endian float32 values, concatenated in manifest order
struct CheckpointInfo {
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  int epoch = 0;
  double metric = 0.0;
  nlohmann::json extra = nlohmann::json::object();
};

inline constexpr const char* kCheckpointFormat = "belt2-checkpoint-v1";

void save_checkpoint(const std::filesystem::path& dir, const ParameterSet& ps, const CheckpointInfo& info);

/// Reads manifest.json. Throws CheckpointMismatch when absent or malformed.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Loads params.bin into an already-constructed parameter set. Names and
/// shapes must match the manifest exactly.
void load_checkpoint_params(const std::filesystem::path& dir, ParameterSet& ps);

}  // namespace belt2
