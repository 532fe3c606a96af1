#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sgen/model.hpp"

namespace sgen {

struct JunctionGateStats {
  std::string junction;
  int channels = 0;
  double mean_active = 0.0;
  double mean_passive = 0.0;
  /// mean(g_a + g_p); values near 1 indicate complementary gates.
  double mean_sum = 0.0;
};

struct GateDump {
  std::vector<JunctionGateStats> junctions;
  std::vector<std::filesystem::path> files;
};

/// Runs the generator on the first image of `source` and writes every SGU
/// gate map as an 8-bit PGM, one file per junction, gate and channel, named
/// "<junction>_<active|passive>_cNN.pgm". Gate value g maps to round(255 g).
GateDump dump_gates(GeneratorParams& params, const SgenConfig& config, const Tensor& source,
                    const std::filesystem::path& out_dir);

}  // namespace sgen
