#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgen/data.hpp"
#include "sgen/model.hpp"
#include "sgen/trainer.hpp"

namespace sgen {

/// Everything a CLI run needs. Loaded from flat `key = value` text where `#`
/// starts a comment; unknown keys are rejected.
struct RunConfig {
  SgenConfig model;
  TrainConfig train;
  DegradationSpec degradation;
  ScaleSet scales = desk_scales();

  /// Directory of .pgm/.ppm images, split in lexicographic order.
  std::filesystem::path corpus_dir;
  double train_fraction = 0.9;
  double val_fraction = 0.1;
  /// Number of procedural training faces; used instead of corpus_dir when set.
  std::optional<std::size_t> synthetic;
  /// Held-out procedural faces following the training seeds.
  std::size_t val_count = 200;

  std::filesystem::path out = "run";
  std::uint64_t eval_seed = 12345;

  /// Also checks that every scale suits the generator divisor and down factor.
  void validate() const;
};

/// Known keys in canonical order.
const std::vector<std::string>& run_config_keys();

/// Sets one key from its textual value. "seed" seeds both the model
/// initialization and the training data order.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Inverse of parse_run_config: every key, one per line.
std::string format_run_config(const RunConfig& config);

struct Corpora {
  Corpus train;
  Corpus val;
};

/// Throws ConfigError naming "corpus_dir" when no corpus is configured.
Corpora open_corpora(const RunConfig& config);

}  // namespace sgen
