#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "sgen/adam.hpp"
#include "sgen/data.hpp"
#include "sgen/model.hpp"

namespace sgen {

/// minimax: generator minimizes mean log(1 - D(G(s))), literally as in the
/// adversarial objective. nonsaturating: generator minimizes -mean log D(G(s)).
enum class LossVariant { minimax, nonsaturating };

LossVariant parse_loss_variant(std::string_view name);
std::string to_string(LossVariant v);

struct TrainConfig {
  double lambda = 10.0;
  double lr = 1e-4;
  int batch_size = 8;
  int steps = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  LossVariant loss_variant = LossVariant::minimax;
  /// Adversarial term disabled; the generator minimizes MSE alone.
  bool mse_only = false;
  /// Validation PSNR every N steps (0 = off).
  int validate_every = 0;
  /// Sample mosaics every N steps (0 = off).
  int sample_every = 0;
  double divergence_limit = 1e6;

  void validate() const;
};

struct LossRecord {
  std::int64_t step = 0;
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_mse = 0.0;
  std::optional<double> val_psnr;
};

struct TrainState {
  ModelParams params;
  AdamState gen_opt;
  AdamState disc_opt;
  std::int64_t step = 0;
  std::vector<LossRecord> history;
};

TrainState make_train_state(const SgenConfig& config, const TrainConfig& train);

struct GanLosses {
  Var d_loss;  // -mean[log D(t) + log(1 - D(G(s)))]
  Var g_adv;   // variant-dependent generator adversarial term
};

/// Log arguments are clamped below at 1e-12.
GanLosses gan_losses(const Var& d_real, const Var& d_fake, LossVariant variant);

/// g_adv + lambda * mse, or mse alone when mse_only.
struct GeneratorObjective {
  Var total;
  Var g_adv;  // invalid when mse_only
  Var mse;
};

GeneratorObjective generator_objective(Graph& graph, const Var& generated, const Var& target,
                                       DiscriminatorParams& disc, const SgenConfig& config,
                                       const TrainConfig& train);

struct StepResult {
  LossRecord losses;
  /// Generator objective on this batch before and after the generator update
  /// (after is only computed when requested).
  double g_objective_before = 0.0;
  std::optional<double> g_objective_after;
};

/// One discriminator update followed by one generator update on a batch.
StepResult train_step(const ImagePair& batch, TrainState& state, const SgenConfig& config,
                       const TrainConfig& train, bool measure_objective = false);

struct TrainHooks {
  /// Output directory for loss.csv, samples/ and the final checkpoint; empty = none.
  std::filesystem::path out_dir;
  std::function<void(const LossRecord&)> on_step;
};

/// Alternates minibatch scales round-robin, validates and samples on schedule,
/// and writes artifacts when hooks.out_dir is set.
TrainState train(const SgenConfig& config, const TrainConfig& train, const Corpus& train_set,
                 const Corpus& val_set, const ScaleSet& scales, const DegradationSpec& spec,
                 const TrainHooks& hooks = {});

/// Mean validation PSNR of the generator over every scale.
double validation_psnr(GeneratorParams& params, const SgenConfig& config, const Corpus& val_set,
                       const ScaleSet& scales, const DegradationSpec& spec);

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

/// Mosaic of ground truth | degraded | restored rows as an 8-bit PPM.
Image8 sample_mosaic(const Tensor& target, const Tensor& source, const Tensor& restored,
                     int max_rows = 4);

}  // namespace sgen
