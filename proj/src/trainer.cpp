#include "sgen/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sgen/checkpoint.hpp"
#include "sgen/metrics.hpp"

namespace sgen {

LossVariant parse_loss_variant(std::string_view name) {
  if (name == "minimax") return LossVariant::minimax;
  if (name == "nonsaturating") return LossVariant::nonsaturating;
  throw ConfigError("unknown loss variant '" + std::string(name) +
                    "' (expected minimax|nonsaturating)");
}

std::string to_string(LossVariant v) {
  return v == LossVariant::minimax ? "minimax" : "nonsaturating";
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (validate_every < 0 || sample_every < 0) throw ConfigError("schedules must be >= 0");
}

TrainState make_train_state(const SgenConfig& config, const TrainConfig& train) {
  TrainState st;
  st.params = init_params(config, config.seed);
  for (AdamState* opt : {&st.gen_opt, &st.disc_opt}) {
    opt->beta1 = train.beta1;
    opt->beta2 = train.beta2;
    opt->epsilon = train.epsilon;
  }
  return st;
}

GanLosses gan_losses(const Var& d_real, const Var& d_fake, LossVariant variant) {
  GanLosses out;
  const Var log_real = log_clamped(d_real);
  const Var log_not_fake = log_clamped(affine(d_fake, -1.0, 1.0));
  out.d_loss = affine(add(mean(log_real), mean(log_not_fake)), -1.0);
  out.g_adv = variant == LossVariant::minimax ? mean(log_not_fake)
                                              : affine(mean(log_clamped(d_fake)), -1.0);
  return out;
}

GeneratorObjective generator_objective(Graph& graph, const Var& generated, const Var& target,
                                       DiscriminatorParams& disc, const SgenConfig& config,
                                       const TrainConfig& train) {
  GeneratorObjective obj;
  obj.mse = mse_loss(generated, target);
  if (train.mse_only) {
    obj.total = obj.mse;
    return obj;
  }
  const Var d_fake = discriminator_forward(graph, generated, disc, config, /*trainable=*/false);
  if (train.loss_variant == LossVariant::minimax)
    obj.g_adv = mean(log_clamped(affine(d_fake, -1.0, 1.0)));
  else
    obj.g_adv = affine(mean(log_clamped(d_fake)), -1.0);
  obj.total = add(obj.g_adv, affine(obj.mse, train.lambda));
  return obj;
}

namespace {

void check_losses(const LossRecord& r, double limit) {
  const bool finite = std::isfinite(r.d_loss) && std::isfinite(r.g_adv) && std::isfinite(r.g_mse);
  const bool diverged = std::abs(r.d_loss) > limit || std::abs(r.g_adv) > limit || r.g_mse > limit;
  if (!finite || diverged) {
    std::ostringstream os;
    os << (finite ? "training diverged" : "non-finite loss") << " at step " << r.step
       << ": d_loss=" << r.d_loss << " g_adv=" << r.g_adv << " g_mse=" << r.g_mse;
    throw NumericError(os.str());
  }
}

double objective_value(const ImagePair& batch, TrainState& state, const SgenConfig& config,
                       const TrainConfig& train) {
  Graph g;
  ForwardOptions opt;
  opt.trainable = false;
  const GeneratorOutput out =
      generator_forward(g, g.constant(batch.source), state.params.generator, config, opt);
  return generator_objective(g, out.image, g.constant(batch.target), state.params.discriminator,
                             config, train)
      .total.item();
}

}  // namespace

namespace {

StepResult run_step(const ImagePair& batch, TrainState& state, const SgenConfig& config,
                    const TrainConfig& train, bool measure_objective) {
  if (batch.source.shape() != batch.target.shape())
    throw ConfigError("train_step: source/target shapes differ");
  StepResult result;
  LossRecord& rec = result.losses;
  rec.step = state.step;

  Graph gen_graph;
  const GeneratorOutput gen = generator_forward(gen_graph, gen_graph.constant(batch.source),
                                                state.params.generator, config);
  const Var target = gen_graph.constant(batch.target);

  if (!train.mse_only) {
    Graph disc_graph;
    DiscriminatorParams& disc = state.params.discriminator;
    const Var d_real =
        discriminator_forward(disc_graph, disc_graph.constant(batch.target), disc, config);
    const Var d_fake =
        discriminator_forward(disc_graph, disc_graph.constant(gen.image.detach()), disc, config);
    const GanLosses gl = gan_losses(d_real, d_fake, train.loss_variant);
    rec.d_loss = gl.d_loss.item();
    if (!std::isfinite(rec.d_loss)) check_losses(rec, train.divergence_limit);
    zero_grads(disc.tensors);
    disc_graph.backward(gl.d_loss);
    adam_step(disc.tensors, state.disc_opt, train.lr);
  }

  const GeneratorObjective obj = generator_objective(gen_graph, gen.image, target,
                                                     state.params.discriminator, config, train);
  rec.g_mse = obj.mse.item();
  rec.g_adv = obj.g_adv.valid() ? obj.g_adv.item() : 0.0;
  result.g_objective_before = obj.total.item();
  check_losses(rec, train.divergence_limit);
  zero_grads(state.params.generator.tensors);
  gen_graph.backward(obj.total);
  adam_step(state.params.generator.tensors, state.gen_opt, train.lr);

  if (measure_objective) result.g_objective_after = objective_value(batch, state, config, train);
  ++state.step;
  state.history.push_back(rec);
  return result;
}

}  // namespace

StepResult train_step(const ImagePair& batch, TrainState& state, const SgenConfig& config,
                      const TrainConfig& train, bool measure_objective) {
  try {
    return run_step(batch, state, config, train, measure_objective);
  } catch (const NumericError& e) {
    const std::string what = e.what();
    if (what.find("at step") != std::string::npos) throw;
    throw NumericError("at step " + std::to_string(state.step) + ": " + what);
  }
}

double validation_psnr(GeneratorParams& params, const SgenConfig& config, const Corpus& val_set,
                       const ScaleSet& scales, const DegradationSpec& spec) {
  const Restorer model = [&](const Tensor& source, const Tensor&) {
    return restore(source, params, config);
  };
  return evaluate(model, val_set, scales, spec).mean_psnr;
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss log '" + path.string() + "'");
  out << "step,d_loss,g_adv,g_mse,val_psnr\n" << std::setprecision(10);
  for (const auto& r : history) {
    out << r.step << ',' << r.d_loss << ',' << r.g_adv << ',' << r.g_mse << ',';
    if (r.val_psnr) out << *r.val_psnr;
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Image8 sample_mosaic(const Tensor& target, const Tensor& source, const Tensor& restored,
                     int max_rows) {
  const Shape s = target.shape();
  if (source.shape() != s || restored.shape() != s)
    throw ConfigError("sample_mosaic: shape mismatch");
  const int rows = std::min(s.n, max_rows);
  constexpr int gap = 2;
  Image8 mosaic(3, rows * s.h + (rows - 1) * gap, 3 * s.w + 2 * gap);
  std::fill(mosaic.pixels.begin(), mosaic.pixels.end(), 255);
  for (int r = 0; r < rows; ++r) {
    int col = 0;
    for (const Tensor* t : {&target, &source, &restored}) {
      const Image8 tile = to_image8(*t, r);
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
          for (int c = 0; c < 3; ++c)
            mosaic.at(r * (s.h + gap) + y, col * (s.w + gap) + x, c) =
                tile.at(y, x, tile.channels == 1 ? 0 : c);
      ++col;
    }
  }
  return mosaic;
}

TrainState train(const SgenConfig& config, const TrainConfig& tc, const Corpus& train_set,
                 const Corpus& val_set, const ScaleSet& scales, const DegradationSpec& spec,
                 const TrainHooks& hooks) {
  config.validate();
  tc.validate();
  spec.validate();
  if (train_set.empty()) throw ConfigError("training corpus is empty");
  check_scales(scales, config.divisor());
  for (const auto& s : scales)
    if (s.height % spec.down_factor || s.width % spec.down_factor)
      throw ConfigError("scale " + s.str() + " is not divisible by down_factor " +
                        std::to_string(spec.down_factor));

  namespace fs = std::filesystem;
  if (!hooks.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(hooks.out_dir, ec);
    if (ec) throw IoError("cannot create '" + hooks.out_dir.string() + "': " + ec.message());
    if (tc.sample_every > 0) fs::create_directories(hooks.out_dir / "samples", ec);
  }

  TrainState state = make_train_state(config, tc);
  std::mt19937_64 rng(tc.seed);
  for (int step = 0; step < tc.steps; ++step) {
    const Scale scale = scales[static_cast<std::size_t>(step) % scales.size()];
    const ImagePair batch = make_batch(train_set, scale, tc.batch_size, spec, rng);
    train_step(batch, state, config, tc);
    LossRecord& rec = state.history.back();
    const bool last = step + 1 == tc.steps;
    if (tc.validate_every > 0 && !val_set.empty() && ((step + 1) % tc.validate_every == 0 || last))
      rec.val_psnr = validation_psnr(state.params.generator, config, val_set, scales, spec);
    if (tc.sample_every > 0 && !hooks.out_dir.empty() && ((step + 1) % tc.sample_every == 0 || last)) {
      const Tensor restored = restore(batch.source, state.params.generator, config);
      char name[32];
      std::snprintf(name, sizeof name, "step_%06d.ppm", step + 1);
      save_image(sample_mosaic(batch.target, batch.source, restored),
                 hooks.out_dir / "samples" / name);
    }
    if (hooks.on_step) hooks.on_step(rec);
  }

  if (!hooks.out_dir.empty()) {
    write_loss_csv(state.history, hooks.out_dir / "loss.csv");
    save_checkpoint(state.params, config, hooks.out_dir / "checkpoint.sgen");
  }
  return state;
}

}  // namespace sgen
