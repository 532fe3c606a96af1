#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sgen/model.hpp"

namespace sgen {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SgenConfig config;
  ModelParams params;
};

/// Layout (little-endian): "SGEN", u32 version, config block, u32 tensor
/// count, then per tensor: u32 path length, path bytes, 4 x u32 shape,
/// raw f64 values. Generator paths are prefixed "gen.", discriminator "disc.".
std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params, const SgenConfig& config);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ModelParams& params, const SgenConfig& config,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sgen
