#include "sgen/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "sgen/checkpoint.hpp"
#include "sgen/gates.hpp"
#include "sgen/metrics.hpp"
#include "sgen/run_config.hpp"
#include "sgen/trainer.hpp"

namespace sgen {
namespace {

namespace fs = std::filesystem;

// Flags shared by train, eval and ablate. Each maps onto a config key and is
// applied after the config file.
struct RunFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::Option*, std::string>> options;
  bool mse_only = false;
  CLI::Option* mse_only_flag = nullptr;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    auto opt = [&](const std::string& flag, const std::string& key, const std::string& help) {
      options.emplace_back(app.add_option(flag, values[key], help), key);
    };
    opt("--steps", "steps", "training steps");
    opt("--combiner", "combiner", "sgu|max|avg|concat");
    opt("--levels", "levels", "encoder/decoder levels");
    opt("--sigma", "sigma", "gaussian noise std in 8-bit units");
    opt("--noise", "noise", "gaussian|uniform|none");
    opt("--scales", "scales", "comma separated HxW list");
    opt("--seed", "seed", "random seed");
    opt("--out", "out", "output directory");
    opt("--synthetic", "synthetic", "use COUNT procedural training faces");
    mse_only_flag = app.add_flag("--mse-only", mse_only, "train with the MSE term alone");
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    for (const auto& [option, key] : options)
      if (option->count() > 0) apply_setting(cfg, key, values.at(key));
    if (mse_only_flag->count() > 0) cfg.train.mse_only = true;
    return cfg;
  }
};

Checkpoint open_checkpoint(const fs::path& path) {
  if (std::error_code ec; !fs::is_regular_file(path, ec))
    throw ConfigError("checkpoint '" + path.string() + "' does not exist");
  return load_checkpoint(path);
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

void print_report(std::ostream& out, const MetricReport& report) {
  out << std::left << std::setw(10) << "scale" << std::right << std::setw(10) << "psnr"
      << std::setw(10) << "ssim" << std::setw(6) << "n" << '\n'
      << std::fixed;
  auto row = [&](const std::string& label, double p, double s, std::size_t n) {
    out << std::left << std::setw(10) << label << std::right << std::setw(10)
        << std::setprecision(3) << p << std::setw(10) << std::setprecision(4) << s << std::setw(6)
        << n << '\n';
  };
  for (const auto& r : report.rows) row(r.scale.str(), r.psnr, r.ssim, r.count);
  row("mean", report.mean_psnr, report.mean_ssim, report.count);
  out << std::defaultfloat;
}

Restorer model_restorer(GeneratorParams& params, const SgenConfig& config) {
  return [&params, config](const Tensor& source, const Tensor&) {
    return restore(source, params, config);
  };
}

Tensor restore_any_size(const Tensor& image, GeneratorParams& params, const SgenConfig& config) {
  const int d = config.divisor();
  const Shape s = image.shape();
  const int ph = (s.h + d - 1) / d * d, pw = (s.w + d - 1) / d * d;
  const Tensor restored = restore(pad_to(image, ph, pw), params, config);
  return crop_to(restored, s.h, s.w);
}

int cmd_train(const RunFlags& flags, std::ostream& out) {
  RunConfig cfg = flags.resolve();
  cfg.validate();
  const Corpora data = open_corpora(cfg);
  make_dir(cfg.out);
  {
    std::ofstream f(cfg.out / "config.txt");
    f << format_run_config(cfg);
  }
  const int log_every = std::max(1, cfg.train.steps / 20);
  TrainHooks hooks;
  hooks.out_dir = cfg.out;
  hooks.on_step = [&](const LossRecord& r) {
    if ((r.step + 1) % log_every != 0 && !r.val_psnr) return;
    out << "step " << r.step + 1 << "  d_loss " << r.d_loss << "  g_adv " << r.g_adv
        << "  g_mse " << r.g_mse;
    if (r.val_psnr) out << "  val_psnr " << *r.val_psnr;
    out << '\n';
  };
  train(cfg.model, cfg.train, data.train, data.val, cfg.scales, cfg.degradation, hooks);
  out << "wrote " << (cfg.out / "checkpoint.sgen").string() << " and "
      << (cfg.out / "loss.csv").string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunFlags& flags, const std::string& checkpoint, bool identity,
             std::ostream& out) {
  RunConfig cfg = flags.resolve();
  Checkpoint ckpt;
  if (!identity) {
    ckpt = open_checkpoint(checkpoint);
    cfg.model = ckpt.config;
  }
  cfg.validate();
  const Corpora data = open_corpora(cfg);
  if (data.val.empty()) throw ConfigError("held-out set is empty (val_count / val_fraction)");
  const Restorer restorer = identity ? Restorer([](const Tensor& s, const Tensor&) { return s; })
                                     : model_restorer(ckpt.params.generator, ckpt.config);
  const MetricReport report =
      evaluate(restorer, data.val, cfg.scales, cfg.degradation, EvalOptions{cfg.eval_seed, 8});
  print_report(out, report);
  make_dir(cfg.out);
  write_report_csv(report, cfg.out / "eval.csv");
  out << "wrote " << (cfg.out / "eval.csv").string() << '\n';
  return kExitOk;
}

int cmd_restore(const std::string& checkpoint, const std::string& input,
                const std::string& output, std::ostream& out) {
  Checkpoint ckpt = open_checkpoint(checkpoint);
  const Image8 img = load_image(input);
  if (img.channels != ckpt.config.image_channels)
    throw ConfigError("image has " + std::to_string(img.channels) + " channels, model expects " +
                      std::to_string(ckpt.config.image_channels));
  const Tensor restored = restore_any_size(to_tensor(img), ckpt.params.generator, ckpt.config);
  save_image(to_image8(restored), output);
  out << "restored " << img.height << "x" << img.width << " -> " << output << '\n';
  return kExitOk;
}

int cmd_degrade(const std::string& input, const std::string& output, int factor,
                const std::string& noise, double sigma, std::uint64_t seed, std::ostream& out) {
  DegradationSpec spec;
  spec.down_factor = factor;
  spec.noise = parse_noise(noise);
  spec.sigma = sigma;
  spec.validate();
  const Image8 img = load_image(input);
  std::mt19937_64 rng(seed);
  save_image(to_image8(degrade(to_tensor(img), spec, rng)), output);
  out << "degraded " << input << " -> " << output << '\n';
  return kExitOk;
}

int cmd_gates(const std::string& checkpoint, const std::string& input, const std::string& out_dir,
              std::ostream& out) {
  Checkpoint ckpt = open_checkpoint(checkpoint);
  const Image8 img = load_image(input);
  if (img.channels != ckpt.config.image_channels)
    throw ConfigError("image has " + std::to_string(img.channels) + " channels, model expects " +
                      std::to_string(ckpt.config.image_channels));
  const int d = ckpt.config.divisor();
  const int ph = (img.height + d - 1) / d * d, pw = (img.width + d - 1) / d * d;
  const GateDump dump =
      dump_gates(ckpt.params.generator, ckpt.config, pad_to(to_tensor(img), ph, pw), out_dir);
  std::ofstream csv(fs::path(out_dir) / "gates.csv");
  csv << "junction,channels,mean_active,mean_passive,mean_sum\n";
  out << "junction            ch   mean g_a  mean g_p  mean(g_a+g_p)\n" << std::fixed
      << std::setprecision(4);
  for (const auto& j : dump.junctions) {
    csv << j.junction << ',' << j.channels << ',' << j.mean_active << ',' << j.mean_passive << ','
        << j.mean_sum << '\n';
    out << std::left << std::setw(18) << j.junction << std::right << std::setw(4) << j.channels
        << std::setw(10) << j.mean_active << std::setw(10) << j.mean_passive << std::setw(12)
        << j.mean_sum << '\n';
  }
  out << std::defaultfloat << "wrote " << dump.files.size() << " gate maps to " << out_dir << '\n';
  return kExitOk;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size())
      throw ConfigError("invalid number '" + item + "' in --noise-sweep");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError("--noise-sweep needs at least one value");
  return values;
}

int cmd_ablate(const RunFlags& flags, const std::string& noise_sweep, std::ostream& out) {
  RunConfig base = flags.resolve();
  base.validate();
  const std::vector<double> sigmas =
      noise_sweep.empty() ? std::vector<double>{} : parse_real_list(noise_sweep);
  const Corpora data = open_corpora(base);
  if (data.val.empty()) throw ConfigError("held-out set is empty (val_count / val_fraction)");
  make_dir(base.out);
  const EvalOptions eval_opts{base.eval_seed, 8};

  std::ofstream csv(base.out / "ablation.csv");
  csv << "variant,combiner,loss,noise,scale,psnr,ssim,n\n" << std::setprecision(10);
  auto emit = [&](const std::string& variant, const std::string& combiner, const std::string& loss,
                  const std::string& noise, const MetricReport& r) {
    for (const auto& row : r.rows)
      csv << variant << ',' << combiner << ',' << loss << ',' << noise << ',' << row.scale.str()
          << ',' << row.psnr << ',' << row.ssim << ',' << row.count << '\n';
    csv << variant << ',' << combiner << ',' << loss << ',' << noise << ",mean," << r.mean_psnr
        << ',' << r.mean_ssim << ',' << r.count << '\n';
    out << std::left << std::setw(14) << variant << std::right << std::fixed
        << std::setprecision(3) << std::setw(9) << r.mean_psnr << " dB" << std::setprecision(4)
        << std::setw(9) << r.mean_ssim << std::defaultfloat << "  (" << noise << ")\n";
  };
  auto noise_label = [](const DegradationSpec& s) {
    std::ostringstream os;
    if (s.noise == NoiseKind::gaussian) os << "gaussian(" << s.sigma << ")";
    else if (s.noise == NoiseKind::uniform) os << "uniform(" << s.uniform_lo << "-" << s.uniform_hi << ")";
    else os << "none";
    return os.str();
  };

  const std::string base_noise = noise_label(base.degradation);
  emit("degraded", "-", "-", base_noise,
       evaluate([](const Tensor& s, const Tensor&) { return s; }, data.val, base.scales,
                base.degradation, eval_opts));

  struct Variant {
    std::string name;
    Combiner combiner;
    bool mse_only;
  };
  const std::vector<Variant> variants{{"sgu-mse", Combiner::sgu, true},
                                      {"max-mse", Combiner::max, true},
                                      {"avg-mse", Combiner::avg, true},
                                      {"concat-mse", Combiner::concat, true},
                                      {"sgu-adv", Combiner::sgu, false}};
  std::optional<ModelParams> sgu_mse;
  for (const auto& v : variants) {
    RunConfig cfg = base;
    cfg.model.combiner = v.combiner;
    cfg.train.mse_only = v.mse_only;
    cfg.validate();
    TrainHooks hooks;
    hooks.out_dir = base.out / v.name;
    TrainState st = train(cfg.model, cfg.train, data.train, data.val, cfg.scales, cfg.degradation, hooks);
    emit(v.name, to_string(v.combiner), v.mse_only ? "mse" : "adversarial", base_noise,
         evaluate(model_restorer(st.params.generator, cfg.model), data.val, cfg.scales,
                  cfg.degradation, eval_opts));
    if (v.name == "sgu-mse") sgu_mse = std::move(st.params);
  }

  if (!sigmas.empty()) {
    SgenConfig model = base.model;
    model.combiner = Combiner::sgu;
    std::vector<DegradationSpec> sweep;
    for (double sigma : sigmas) {
      DegradationSpec s = base.degradation;
      s.noise = NoiseKind::gaussian;
      s.sigma = sigma;
      sweep.push_back(s);
    }
    DegradationSpec uni = base.degradation;
    uni.noise = NoiseKind::uniform;
    sweep.push_back(uni);
    for (const auto& spec : sweep) {
      spec.validate();
      emit("sgu-mse", "sgu", "mse", noise_label(spec),
           evaluate(model_restorer(sgu_mse->generator, model), data.val, base.scales, spec,
                    eval_opts));
    }
  }
  out << "wrote " << (base.out / "ablation.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face restoration with a sequential gating ensemble network", "sgen"};
  app.require_subcommand(1);

  RunFlags train_flags, eval_flags, ablate_flags;
  std::string checkpoint, input, output, out_dir, noise_sweep;
  std::string noise = "gaussian";
  int factor = 4;
  double sigma = 30.0;
  std::uint64_t seed = 1;
  bool identity = false;

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_flags.attach(*train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "per-scale PSNR/SSIM on the held-out set");
  eval_flags.attach(*eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint");
  eval_cmd->add_flag("--identity", identity, "evaluate the degraded input itself (baseline)");

  CLI::App* restore_cmd = app.add_subcommand("restore", "restore one image of any size");
  restore_cmd->add_option("--checkpoint", checkpoint)->required();
  restore_cmd->add_option("--input", input)->required();
  restore_cmd->add_option("--output", output)->required();

  CLI::App* degrade_cmd = app.add_subcommand("degrade", "apply the degradation model to an image");
  degrade_cmd->add_option("--input", input)->required();
  degrade_cmd->add_option("--output", output)->required();
  degrade_cmd->add_option("--factor", factor, "downsampling factor");
  degrade_cmd->add_option("--noise", noise, "gaussian|uniform|none");
  degrade_cmd->add_option("--sigma", sigma, "gaussian noise std in 8-bit units");
  degrade_cmd->add_option("--seed", seed);

  CLI::App* gates_cmd = app.add_subcommand("gates", "dump SGU gate maps for one image");
  gates_cmd->add_option("--checkpoint", checkpoint)->required();
  gates_cmd->add_option("--input", input)->required();
  gates_cmd->add_option("--out", out_dir)->required();

  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "train every combiner and loss variant and compare them");
  ablate_flags.attach(*ablate_cmd);
  ablate_cmd->add_option("--noise-sweep", noise_sweep,
                         "comma separated gaussian sigmas to evaluate the sgu-mse model under");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, out);
    if (*eval_cmd) {
      if (checkpoint.empty() && !identity)
        throw ConfigError("eval needs --checkpoint or --identity");
      return cmd_eval(eval_flags, checkpoint, identity, out);
    }
    if (*restore_cmd) return cmd_restore(checkpoint, input, output, out);
    if (*degrade_cmd) return cmd_degrade(input, output, factor, noise, sigma, seed, out);
    if (*gates_cmd) return cmd_gates(checkpoint, input, out_dir, out);
    if (*ablate_cmd) return cmd_ablate(ablate_flags, noise_sweep, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sgen
