#include "sgen/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace sgen {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("invalid boolean '" + std::string(value) + "' for " + std::string(key));
}

std::vector<int> parse_int_list(std::string_view key, std::string_view value) {
  std::vector<int> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    out.push_back(parse_number<int>(key, trim(value.substr(0, comma))));
    value = comma == std::string_view::npos ? std::string_view{} : value.substr(comma + 1);
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto add = [&](std::string name, auto set, auto get) {
      f.push_back({std::move(name), set, get});
    };
#define SGEN_INT_FIELD(key, member, type)                                               \
  add(                                                                                  \
      key, [](RunConfig& c, std::string_view v) { c.member = parse_number<type>(key, v); }, \
      [](const RunConfig& c) { return std::to_string(c.member); })
#define SGEN_REAL_FIELD(key, member)                                                      \
  add(                                                                                    \
      key, [](RunConfig& c, std::string_view v) { c.member = parse_number<double>(key, v); }, \
      [](const RunConfig& c) { return num(c.member); })
    SGEN_INT_FIELD("levels", model.levels, int);
    SGEN_INT_FIELD("base_channels", model.base_channels, int);
    add("combiner", [](RunConfig& c, std::string_view v) { c.model.combiner = parse_combiner(v); },
        [](const RunConfig& c) { return to_string(c.model.combiner); });
    SGEN_REAL_FIELD("lrelu_alpha", model.lrelu_alpha);
    add(
        "seed",
        [](RunConfig& c, std::string_view v) {
          c.model.seed = c.train.seed = parse_number<std::uint64_t>("seed", v);
        },
        [](const RunConfig& c) { return std::to_string(c.model.seed); });
    SGEN_INT_FIELD("image_channels", model.image_channels, int);
    add("disc_channels",
        [](RunConfig& c, std::string_view v) { c.model.disc_channels = parse_int_list("disc_channels", v); },
        [](const RunConfig& c) {
          std::string s;
          for (int w : c.model.disc_channels) s += (s.empty() ? "" : ",") + std::to_string(w);
          return s;
        });
    SGEN_REAL_FIELD("lambda", train.lambda);
    SGEN_REAL_FIELD("lr", train.lr);
    SGEN_INT_FIELD("batch_size", train.batch_size, int);
    SGEN_INT_FIELD("steps", train.steps, int);
    SGEN_REAL_FIELD("beta1", train.beta1);
    SGEN_REAL_FIELD("beta2", train.beta2);
    SGEN_REAL_FIELD("epsilon", train.epsilon);
    add("loss_variant",
        [](RunConfig& c, std::string_view v) { c.train.loss_variant = parse_loss_variant(v); },
        [](const RunConfig& c) { return to_string(c.train.loss_variant); });
    add("mse_only", [](RunConfig& c, std::string_view v) { c.train.mse_only = parse_bool("mse_only", v); },
        [](const RunConfig& c) { return std::string(c.train.mse_only ? "true" : "false"); });
    SGEN_INT_FIELD("validate_every", train.validate_every, int);
    SGEN_INT_FIELD("sample_every", train.sample_every, int);
    SGEN_REAL_FIELD("divergence_limit", train.divergence_limit);
    SGEN_INT_FIELD("down_factor", degradation.down_factor, int);
    add("noise", [](RunConfig& c, std::string_view v) { c.degradation.noise = parse_noise(v); },
        [](const RunConfig& c) { return to_string(c.degradation.noise); });
    SGEN_REAL_FIELD("sigma", degradation.sigma);
    SGEN_REAL_FIELD("uniform_lo", degradation.uniform_lo);
    SGEN_REAL_FIELD("uniform_hi", degradation.uniform_hi);
    add("scales", [](RunConfig& c, std::string_view v) { c.scales = parse_scales(v); },
        [](const RunConfig& c) { return format_scales(c.scales); });
    add("corpus_dir", [](RunConfig& c, std::string_view v) { c.corpus_dir = std::string(v); },
        [](const RunConfig& c) { return c.corpus_dir.string(); });
    SGEN_REAL_FIELD("train_fraction", train_fraction);
    SGEN_REAL_FIELD("val_fraction", val_fraction);
    add(
        "synthetic",
        [](RunConfig& c, std::string_view v) {
          if (v.empty() || v == "none") c.synthetic.reset();
          else c.synthetic = parse_number<std::size_t>("synthetic", v);
        },
        [](const RunConfig& c) {
          return c.synthetic ? std::to_string(*c.synthetic) : std::string("none");
        });
    SGEN_INT_FIELD("val_count", val_count, std::size_t);
    add("out", [](RunConfig& c, std::string_view v) { c.out = std::string(v); },
        [](const RunConfig& c) { return c.out.string(); });
    SGEN_INT_FIELD("eval_seed", eval_seed, std::uint64_t);
#undef SGEN_INT_FIELD
#undef SGEN_REAL_FIELD
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  degradation.validate();
  if (scales.empty()) throw ConfigError("scales must not be empty");
  check_scales(scales, model.divisor());
  for (const auto& s : scales) {
    if (s.height % degradation.down_factor || s.width % degradation.down_factor)
      throw ConfigError("scale " + s.str() + " is not divisible by down_factor " +
                        std::to_string(degradation.down_factor));
    if (!train.mse_only && std::min(s.height, s.width) < model.disc_min_extent())
      throw ConfigError("scale " + s.str() + " is below the discriminator minimum extent " +
                        std::to_string(model.disc_min_extent()));
  }
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.name);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields())
    if (f.name == key) {
      f.set(config, trim(value));
      return;
    }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    try {
      apply_setting(base, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), std::move(base));
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(config) + "\n";
  return out;
}

Corpora open_corpora(const RunConfig& config) {
  if (config.synthetic) {
    const std::size_t n = *config.synthetic;
    const Corpus all = Corpus::synthetic(n + config.val_count, 0, config.model.image_channels);
    return {all.slice(0, n), all.slice(n, config.val_count)};
  }
  if (config.corpus_dir.empty())
    throw ConfigError("no corpus configured: set corpus_dir or pass --synthetic COUNT");
  if (std::error_code ec; !std::filesystem::is_directory(config.corpus_dir, ec))
    throw ConfigError("corpus_dir '" + config.corpus_dir.string() + "' is not a directory");
  const Corpus all = Corpus::directory(config.corpus_dir);
  if (all.empty())
    throw ConfigError("corpus_dir '" + config.corpus_dir.string() + "' contains no .pgm/.ppm images");
  if (all.channels() != config.model.image_channels)
    throw ConfigError("corpus_dir images have " + std::to_string(all.channels()) +
                      " channels but image_channels is " +
                      std::to_string(config.model.image_channels));
  const CorpusSplit split = split_corpus(all, config.train_fraction, config.val_fraction);
  return {split.train, split.val};
}

}  // namespace sgen
