#include "sgen/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sgen {

Combiner parse_combiner(std::string_view name) {
  if (name == "sgu") return Combiner::sgu;
  if (name == "max") return Combiner::max;
  if (name == "avg") return Combiner::avg;
  if (name == "concat") return Combiner::concat;
  throw ConfigError("unknown combiner '" + std::string(name) + "' (expected sgu|max|avg|concat)");
}

std::string to_string(Combiner c) {
  switch (c) {
    case Combiner::sgu: return "sgu";
    case Combiner::max: return "max";
    case Combiner::avg: return "avg";
    case Combiner::concat: return "concat";
  }
  return "?";
}

void SgenConfig::validate() const {
  if (levels < 2) throw ConfigError("levels must be >= 2, got " + std::to_string(levels));
  if (levels > 6) throw ConfigError("levels must be <= 6, got " + std::to_string(levels));
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (image_channels != 1 && image_channels != 3)
    throw ConfigError("image_channels must be 1 or 3");
  if (!(lrelu_alpha >= 0.0 && lrelu_alpha < 1.0)) throw ConfigError("lrelu_alpha must be in [0, 1)");
  if (disc_channels.size() != 4)
    throw ConfigError("discriminator needs exactly 4 conv widths");
  if (disc_channels.back() != 512)
    throw ConfigError("last discriminator conv must have 512 channels");
  for (int c : disc_channels)
    if (c < 1) throw ConfigError("discriminator widths must be positive");
  switch (combiner) {
    case Combiner::sgu:
    case Combiner::max:
    case Combiner::avg:
    case Combiner::concat:
      break;
    default:
      throw ConfigError("unknown combiner");
  }
}

int SgenConfig::trunk_channels(int level) const {
  return base_channels * std::min(1 << (level - 1), 8);
}

int SgenConfig::decoder_channels(int level) const {
  return level > levels ? trunk_channels(1) : trunk_channels(levels - level + 1);
}

namespace {

// Pooling conv for factor 2^j: kernel 2j + 1, padding j.
int pool_kernel(int log2_factor) { return 2 * log2_factor + 1; }

enum class Init { he, xavier };

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  void conv(ParamSet& ps, const std::string& path, int out_c, int in_c, int k, Init init) {
    const double fan_in = static_cast<double>(in_c) * k * k;
    const double fan_out = static_cast<double>(out_c) * k * k;
    add(ps, path, Shape{out_c, in_c, k, k}, out_c, bound(init, fan_in, fan_out));
  }

  // Transposed kernels are (in_c, out_c, k, k); each output pixel sees
  // in_c * (k / stride)^2 taps.
  void deconv(ParamSet& ps, const std::string& path, int in_c, int out_c, int k, int stride,
              Init init) {
    const double taps = static_cast<double>(k) * k / (static_cast<double>(stride) * stride);
    add(ps, path, Shape{in_c, out_c, k, k}, out_c, bound(init, in_c * taps, out_c * taps));
  }

 private:
  static double bound(Init init, double fan_in, double fan_out) {
    return init == Init::he ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
  }

  void add(ParamSet& ps, const std::string& path, Shape kshape, int bias_len, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor w(kshape);
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = dist(rng_);
    w.requires_grad = true;
    Tensor b(Shape{1, bias_len, 1, 1});
    b.requires_grad = true;
    ps.emplace(path + ".weight", std::move(w));
    ps.emplace(path + ".bias", std::move(b));
  }

  std::mt19937_64 rng_;
};

void add_junction(Initializer& init, ParamSet& ps, const std::string& name, int channels,
                  Combiner combiner) {
  if (combiner == Combiner::sgu) {
    init.conv(ps, name + ".gate_active", channels, channels, 3, Init::xavier);
    init.conv(ps, name + ".gate_passive", channels, channels, 3, Init::xavier);
  } else if (combiner == Combiner::concat) {
    init.conv(ps, name + ".fuse", channels, 2 * channels, 1, Init::xavier);
  }
}

std::string enc_junction(int level) { return "enc.junction" + std::to_string(level); }
std::string dec_junction(int level) { return "dec.junction" + std::to_string(level); }

Var checked(const Var& v, const std::string& path) {
  if (!v.value().allFinite())
    throw NumericError("non-finite activation at layer '" + path + "'");
  return v;
}

}  // namespace

ModelParams init_params(const SgenConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer init(seed);
  ModelParams mp;
  ParamSet& g = mp.generator.tensors;
  const int levels = config.levels;
  const int top = config.trunk_channels(levels);

  init.conv(g, "enc.conv_in", config.trunk_channels(1), config.image_channels, 3, Init::he);
  for (int k = 1; k <= levels; ++k) {
    const int in_c = k == 1 ? config.trunk_channels(1) : config.trunk_channels(k - 1);
    init.conv(g, "enc.trunk" + std::to_string(k), config.trunk_channels(k), in_c, 3, Init::he);
  }
  for (int k = 1; k <= levels; ++k) {
    init.conv(g, "enc.base" + std::to_string(k), top, config.trunk_channels(k),
              pool_kernel(levels - k + 1), Init::he);
  }
  for (int k = 2; k <= levels; ++k) add_junction(init, g, enc_junction(k), top, config.combiner);
  for (int k = 1; k <= levels; ++k) {
    const int factor = 1 << k;
    init.deconv(g, "dec.base" + std::to_string(k), top, config.decoder_channels(k), 2 * factor,
                factor, Init::he);
  }
  for (int k = 1; k <= levels; ++k) {
    if (k >= 2) add_junction(init, g, dec_junction(k), config.decoder_channels(k), config.combiner);
    init.deconv(g, "dec.merge" + std::to_string(k), config.decoder_channels(k),
                config.decoder_channels(k + 1), 4, 2, Init::he);
  }
  init.conv(g, "out.conv", config.image_channels, config.decoder_channels(levels + 1), 3,
            Init::xavier);

  ParamSet& d = mp.discriminator.tensors;
  int in_c = config.image_channels;
  for (std::size_t l = 0; l < config.disc_channels.size(); ++l) {
    init.conv(d, "conv" + std::to_string(l + 1), config.disc_channels[l], in_c, 3, Init::he);
    in_c = config.disc_channels[l];
  }
  init.conv(d, "fc", 1, in_c, 1, Init::xavier);
  return mp;
}

Var bind_param(Graph& graph, ParamSet& params, const std::string& path, bool trainable) {
  auto it = params.find(path);
  if (it == params.end()) throw ConfigError("missing parameter '" + path + "'");
  return trainable ? graph.param(it->second) : graph.constant(it->second);
}

Var sgu(const Var& x_active, const Var& x_passive, const SguWeights& weights,
        const std::optional<GateValues>& forced, JunctionGates* record) {
  if (x_active.shape() != x_passive.shape())
    throw ConfigError("sgu: shape mismatch " + x_active.shape().str() + " vs " +
                      x_passive.shape().str());
  Graph& g = *x_active.graph();
  Var gate_a, gate_p;
  if (forced) {
    const Shape s = x_active.shape();
    gate_a = g.constant(s, Eigen::ArrayXd::Constant(s.numel(), forced->active));
    gate_p = g.constant(s, Eigen::ArrayXd::Constant(s.numel(), forced->passive));
  } else {
    gate_a = sigmoid(conv2d(x_active, weights.active_weight, weights.active_bias, 1, 1));
    gate_p = sigmoid(conv2d(x_active, weights.passive_weight, weights.passive_bias, 1, 1));
  }
  if (record) {
    record->active = gate_a;
    record->passive = gate_p;
  }
  return add(mul(gate_a, x_active), mul(gate_p, x_passive));
}

Var combine(Combiner kind, const Var& active, const Var& passive, Graph& graph, ParamSet& params,
            const std::string& junction, bool trainable, const std::optional<GateValues>& forced,
            JunctionGates* record) {
  if (active.shape() != passive.shape())
    throw ConfigError("combine: shape mismatch " + active.shape().str() + " vs " +
                      passive.shape().str());
  switch (kind) {
    case Combiner::sgu: {
      SguWeights w;
      if (!forced) {
        w.active_weight = bind_param(graph, params, junction + ".gate_active.weight", trainable);
        w.active_bias = bind_param(graph, params, junction + ".gate_active.bias", trainable);
        w.passive_weight = bind_param(graph, params, junction + ".gate_passive.weight", trainable);
        w.passive_bias = bind_param(graph, params, junction + ".gate_passive.bias", trainable);
      }
      if (record) record->name = junction;
      return sgu(active, passive, w, forced, record);
    }
    case Combiner::max:
      return maximum(active, passive);
    case Combiner::avg:
      return affine(add(active, passive), 0.5);
    case Combiner::concat: {
      Var w = bind_param(graph, params, junction + ".fuse.weight", trainable);
      Var b = bind_param(graph, params, junction + ".fuse.bias", trainable);
      return conv2d(concat_channels(active, passive), w, b, 1, 0);
    }
  }
  throw ConfigError("combine: unknown combiner");
}

GeneratorOutput generator_forward(Graph& graph, const Var& source, GeneratorParams& params,
                                  const SgenConfig& config, const ForwardOptions& options) {
  config.validate();
  const Shape in = source.shape();
  const int div = config.divisor();
  if (in.c != config.image_channels)
    throw ConfigError("generator: expected " + std::to_string(config.image_channels) +
                      " image channels, got shape " + in.str());
  if (in.h % div != 0 || in.w % div != 0 || in.h < div || in.w < div)
    throw ConfigError("generator: input " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                      " is not a multiple of " + std::to_string(div) +
                      "; pad the image to a multiple of " + std::to_string(div) + " first");

  ParamSet& ps = params.tensors;
  const bool tr = options.trainable;
  const double alpha = config.lrelu_alpha;
  const int levels = config.levels;
  auto conv = [&](const Var& x, const std::string& layer, int stride, int pad) {
    return conv2d(x, bind_param(graph, ps, layer + ".weight", tr), bind_param(graph, ps, layer + ".bias", tr),
                  stride, pad);
  };
  auto deconv = [&](const Var& x, const std::string& layer, int factor) {
    return deconv2d(x, bind_param(graph, ps, layer + ".weight", tr),
                    bind_param(graph, ps, layer + ".bias", tr), factor);
  };

  GeneratorOutput out;
  LevelActivations& a = out.acts;

  Var h = checked(lrelu(conv(source, "enc.conv_in", 1, 1), alpha), "enc.conv_in");
  for (int k = 1; k <= levels; ++k) {
    const std::string layer = "enc.trunk" + std::to_string(k);
    h = checked(lrelu(conv(h, layer, 2, 1), alpha), layer);
    a.trunk.push_back(h);
  }
  for (int k = 1; k <= levels; ++k) {
    const int j = levels - k + 1;
    const std::string layer = "enc.base" + std::to_string(k);
    a.base_encoded.push_back(
        checked(lrelu(conv(a.trunk[k - 1], layer, 1 << j, pool_kernel(j) / 2), alpha), layer));
  }
  a.enc_combined.push_back(a.base_encoded[0]);
  for (int k = 2; k <= levels; ++k) {
    JunctionGates rec;
    Var merged = combine(config.combiner, a.base_encoded[k - 1], a.enc_combined[k - 2], graph, ps,
                         enc_junction(k), tr, options.encoder_gates, &rec);
    if (config.combiner == Combiner::sgu) a.gates.push_back(rec);
    a.enc_combined.push_back(checked(merged, enc_junction(k)));
  }
  for (int k = 1; k <= levels; ++k) {
    const std::string layer = "dec.base" + std::to_string(k);
    a.base_decoded.push_back(
        checked(relu(deconv(a.enc_combined[levels - k], layer, 1 << k)), layer));
  }
  for (int k = 1; k <= levels; ++k) {
    Var merged = a.base_decoded[k - 1];
    if (k >= 2) {
      JunctionGates rec;
      merged = combine(config.combiner, a.base_decoded[k - 1], a.dec_combined[k - 2], graph, ps,
                       dec_junction(k), tr, options.decoder_gates, &rec);
      if (config.combiner == Combiner::sgu) a.gates.push_back(rec);
      checked(merged, dec_junction(k));
    }
    const std::string layer = "dec.merge" + std::to_string(k);
    a.dec_combined.push_back(checked(relu(deconv(merged, layer, 2)), layer));
  }
  out.image = checked(tanh(conv(a.dec_combined.back(), "out.conv", 1, 1)), "out.conv");
  return out;
}

Var discriminator_forward(Graph& graph, const Var& image, DiscriminatorParams& params,
                          const SgenConfig& config, bool trainable) {
  const Shape in = image.shape();
  const int min_extent = config.disc_min_extent();
  if (in.h < min_extent || in.w < min_extent)
    throw ConfigError("discriminator: input " + std::to_string(in.h) + "x" +
                      std::to_string(in.w) + " is smaller than its total stride " +
                      std::to_string(min_extent));
  ParamSet& ps = params.tensors;
  Var h = image;
  for (std::size_t l = 0; l < config.disc_channels.size(); ++l) {
    const std::string layer = "conv" + std::to_string(l + 1);
    h = lrelu(conv2d(h, bind_param(graph, ps, layer + ".weight", trainable),
                     bind_param(graph, ps, layer + ".bias", trainable), 2, 1),
              config.lrelu_alpha);
    checked(h, "disc." + layer);
  }
  Var pooled = global_avg_pool(h);
  Var logit = conv2d(pooled, bind_param(graph, ps, "fc.weight", trainable),
                     bind_param(graph, ps, "fc.bias", trainable), 1, 0);
  return checked(sigmoid(logit), "disc.fc");
}

Tensor restore(const Tensor& source, GeneratorParams& params, const SgenConfig& config) {
  Graph g;
  ForwardOptions opt;
  opt.trainable = false;
  return generator_forward(g, g.constant(source), params, config, opt).image.detach();
}

}  // namespace sgen
