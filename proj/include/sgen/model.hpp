#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgen/adam.hpp"
#include "sgen/graph.hpp"

namespace sgen {

/// How two same-shaped feature maps are merged at a junction.
enum class Combiner { sgu, max, avg, concat };

Combiner parse_combiner(std::string_view name);
std::string to_string(Combiner c);

struct SgenConfig {
  int levels = 3;
  int base_channels = 8;
  Combiner combiner = Combiner::sgu;
  double lrelu_alpha = 0.2;
  std::uint64_t seed = 1;
  int image_channels = 1;
  /// Output widths of the four strided discriminator convolutions.
  std::vector<int> disc_channels{16, 32, 64, 512};

  void validate() const;
  /// Spatial dims of generator inputs must be multiples of this (2^(levels+1)).
  int divisor() const { return 1 << (levels + 1); }
  /// Width of the encoder trunk at level 1..levels (doubling, capped at 8x).
  int trunk_channels(int level) const;
  /// Width of the decoder branch restored at level 1..levels+1.
  int decoder_channels(int level) const;
  /// Minimum spatial extent accepted by the discriminator.
  int disc_min_extent() const { return 1 << static_cast<int>(disc_channels.size()); }
};

struct GeneratorParams {
  ParamSet tensors;
};

struct DiscriminatorParams {
  ParamSet tensors;
};

struct ModelParams {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
};

/// Deterministic He/Xavier-uniform initialization; biases start at zero.
ModelParams init_params(const SgenConfig& config, std::uint64_t seed);

/// Constant gate values replacing sigmoid(conv(x_active)).
struct GateValues {
  double active = 1.0;
  double passive = 0.0;
};

struct ForwardOptions {
  /// Bind parameters as gradient-receiving leaves; otherwise as constants.
  bool trainable = true;
  std::optional<GateValues> encoder_gates;
  std::optional<GateValues> decoder_gates;
};

/// Gate maps produced at one SGU junction.
struct JunctionGates {
  std::string name;
  Var active;
  Var passive;
};

/// Intermediate features of one generator pass, indexed by level - 1.
struct LevelActivations {
  std::vector<Var> trunk;         // encoder features per level
  std::vector<Var> base_encoded;  // per-level features pooled to the deepest scale
  std::vector<Var> enc_combined;  // bottom-up combined encoder features
  std::vector<Var> base_decoded;  // per-level branch restored from enc_combined
  std::vector<Var> dec_combined;  // top-down combined decoder features
  std::vector<JunctionGates> gates;
};

struct GeneratorOutput {
  Var image;
  LevelActivations acts;
};

/// Parameters of one gating unit: two channel-preserving 3x3 convolutions.
struct SguWeights {
  Var active_weight, active_bias;
  Var passive_weight, passive_bias;
};

/// sigmoid(conv_a(x_a)) * x_a + sigmoid(conv_p(x_a)) * x_p. Both gates are
/// computed from the active input. `forced` replaces the sigmoid outputs by
/// constants; `record` receives the gate maps when non-null.
Var sgu(const Var& x_active, const Var& x_passive, const SguWeights& weights,
        const std::optional<GateValues>& forced = std::nullopt, JunctionGates* record = nullptr);

/// Merges two same-shaped maps. `junction` is the parameter prefix holding the
/// gate (sgu) or fuse (concat) convolutions; unused for max/avg.
Var combine(Combiner kind, const Var& active, const Var& passive, Graph& graph, ParamSet& params,
            const std::string& junction, bool trainable,
            const std::optional<GateValues>& forced = std::nullopt,
            JunctionGates* record = nullptr);

GeneratorOutput generator_forward(Graph& graph, const Var& source, GeneratorParams& params,
                                  const SgenConfig& config, const ForwardOptions& options = {});

/// Probability (n, 1, 1, 1) that each image is a real sample.
Var discriminator_forward(Graph& graph, const Var& image, DiscriminatorParams& params,
                          const SgenConfig& config, bool trainable = true);

/// Binds a stored parameter into a graph as a leaf or a constant.
Var bind_param(Graph& graph, ParamSet& params, const std::string& path, bool trainable);

/// Convenience: runs the generator on a standalone tensor without recording gradients.
Tensor restore(const Tensor& source, GeneratorParams& params, const SgenConfig& config);

}  // namespace sgen
