#include "sgen/data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sgen {

NoiseKind parse_noise(std::string_view name) {
  if (name == "none") return NoiseKind::none;
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "uniform") return NoiseKind::uniform;
  throw ConfigError("unknown noise kind '" + std::string(name) + "' (expected gaussian|uniform|none)");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::uniform: return "uniform";
  }
  return "?";
}

void DegradationSpec::validate() const {
  if (down_factor < 1) throw ConfigError("down_factor must be >= 1, got " + std::to_string(down_factor));
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (noise == NoiseKind::uniform && !(uniform_hi >= uniform_lo))
    throw ConfigError("uniform noise needs uniform_hi >= uniform_lo");
}

ScaleSet parse_scales(std::string_view text) {
  ScaleSet out;
  std::string item;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    const auto x = item.find_first_of("xX");
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      std::size_t used_h = 0, used_w = 0;
      const int h = std::stoi(item.substr(0, x), &used_h);
      const int w = std::stoi(item.substr(x + 1), &used_w);
      if (used_h != x || used_w != item.size() - x - 1 || h < 1 || w < 1)
        throw std::invalid_argument(item);
      out.push_back({h, w});
    } catch (const std::logic_error&) {
      throw ConfigError("bad scale '" + item + "' (expected HxW)");
    }
  }
  if (out.empty()) throw ConfigError("empty scale list");
  return out;
}

std::string format_scales(const ScaleSet& scales) {
  std::string out;
  for (const auto& s : scales) {
    if (!out.empty()) out += ",";
    out += s.str();
  }
  return out;
}

ScaleSet sample_scales(Scale min, Scale max, int count, int divisor) {
  if (count < 2) throw ConfigError("sample_scales: count must be >= 2");
  if (divisor < 1) throw ConfigError("sample_scales: divisor must be >= 1");
  if (!(min.height < max.height && min.width < max.width))
    throw ConfigError("sample_scales: min " + min.str() + " must be below max " + max.str());
  if (min.height % divisor || min.width % divisor || max.height % divisor || max.width % divisor)
    throw ConfigError("sample_scales: endpoints " + min.str() + ", " + max.str() +
                      " are not multiples of " + std::to_string(divisor));
  auto snap = [divisor](double v) {
    return static_cast<int>(std::lround(v / divisor)) * divisor;
  };
  ScaleSet out;
  for (int i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / (count - 1);
    out.push_back({snap(min.height + t * (max.height - min.height)),
                   snap(min.width + t * (max.width - min.width))});
  }
  return out;
}

void check_scales(const ScaleSet& scales, int divisor) {
  if (scales.empty()) throw ConfigError("no scales configured");
  for (const auto& s : scales)
    if (s.height % divisor || s.width % divisor || s.height < divisor || s.width < divisor)
      throw ConfigError("scale " + s.str() + " is not a positive multiple of " +
                        std::to_string(divisor));
}

ScaleSet full_scales() { return sample_scales({128, 96}, {208, 176}, 6, 16); }
ScaleSet desk_scales() { return {{48, 32}, {64, 48}, {80, 64}}; }

Eigen::ArrayXd sample_noise(const DegradationSpec& spec, std::mt19937_64& rng, std::size_t count) {
  Eigen::ArrayXd out(static_cast<Eigen::Index>(count));
  switch (spec.noise) {
    case NoiseKind::none:
      out.setZero();
      break;
    case NoiseKind::gaussian: {
      std::normal_distribution<double> dist(0.0, spec.sigma);
      for (auto& v : out) v = dist(rng);
      break;
    }
    case NoiseKind::uniform: {
      std::uniform_real_distribution<double> dist(spec.uniform_lo, spec.uniform_hi);
      for (auto& v : out) v = dist(rng);
      break;
    }
  }
  return out;
}

Tensor degrade(const Tensor& clean, const DegradationSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const Shape s = clean.shape();
  const int f = spec.down_factor;
  if (s.h % f != 0 || s.w % f != 0)
    throw ConfigError("degrade: image " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                      " is not divisible by down_factor " + std::to_string(f));
  const int lh = s.h / f, lw = s.w / f;
  const Eigen::ArrayXd noise =
      sample_noise(spec, rng, static_cast<std::size_t>(s.n) * s.c * lh * lw);
  Tensor out(s);
  Eigen::Index k = 0;
  const double area = static_cast<double>(f) * f;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const auto hr = clean.plane(n, c);
      auto dst = out.plane(n, c);
      for (int i = 0; i < lh; ++i)
        for (int j = 0; j < lw; ++j) {
          // Noise is specified in 8-bit units; 255 / 2 maps it onto [-1, 1].
          const double mean = hr.block(i * f, j * f, f, f).sum() / area;
          const double v = std::clamp(mean + noise[k++] / 127.5, -1.0, 1.0);
          dst.block(i * f, j * f, f, f).setConstant(v);
        }
    }
  return out;
}

namespace {

struct FaceParams {
  double bg_top, bg_bottom, bg_tilt;
  double cx, cy, rx, ry, skin, light;
  double hair, hairline;
  double eye_dx, eye_dy, eye_rx, eye_ry, sclera, pupil;
  double brow;
  double nose_shadow;
  double mouth_y, mouth_w, mouth_curve, mouth_thick, mouth;
};

FaceParams face_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  FaceParams p{};
  p.bg_top = u(55, 150);
  p.bg_bottom = u(55, 150);
  p.bg_tilt = u(-30, 30);
  p.cx = u(0.44, 0.56);
  p.cy = u(0.48, 0.56);
  p.rx = u(0.26, 0.36);
  p.ry = u(0.32, 0.42);
  p.skin = u(140, 215);
  p.light = u(-0.25, 0.25);
  p.hair = u(30, 100);
  p.hairline = u(0.45, 0.7);
  p.eye_dx = u(0.34, 0.46);
  p.eye_dy = u(0.12, 0.25);
  p.eye_rx = u(0.14, 0.2);
  p.eye_ry = u(0.06, 0.09);
  p.sclera = u(200, 245);
  p.pupil = u(10, 60);
  p.brow = u(20, 80);
  p.nose_shadow = u(15, 40);
  p.mouth_y = u(0.45, 0.6);
  p.mouth_w = u(0.25, 0.4);
  p.mouth_curve = u(-0.08, 0.12);
  p.mouth_thick = u(0.03, 0.06);
  p.mouth = u(50, 120);
  return p;
}

inline double ellipse(double u, double v, double cx, double cy, double rx, double ry) {
  const double du = (u - cx) / rx, dv = (v - cy) / ry;
  return du * du + dv * dv;
}

double shade(const FaceParams& p, double u, double v) {
  double val = p.bg_top + (p.bg_bottom - p.bg_top) * v + p.bg_tilt * (u - 0.5);
  if (ellipse(u, v, p.cx, p.cy - 0.06 * p.ry, 1.12 * p.rx, 1.1 * p.ry) <= 1.0 && v < p.cy + 0.2 * p.ry)
    val = p.hair;
  const double face = ellipse(u, v, p.cx, p.cy, p.rx, p.ry);
  if (face <= 1.0 && v >= p.cy - p.hairline * p.ry) {
    val = p.skin * (1.0 + p.light * (u - p.cx) / p.rx) - 25.0 * face;
    const double eye_y = p.cy - p.eye_dy * p.ry;
    for (double side : {-1.0, 1.0}) {
      const double ex = p.cx + side * p.eye_dx * p.rx;
      const double erx = p.eye_rx * p.rx, ery = p.eye_ry * p.ry;
      if (ellipse(u, v, ex, eye_y, erx, ery) <= 1.0) {
        val = ellipse(u, v, ex, eye_y, 0.9 * ery * 0.75, 0.9 * ery) <= 1.0 ? p.pupil : p.sclera;
      }
      if (ellipse(u, v, ex, eye_y - 2.3 * ery, 1.2 * erx, 0.35 * ery) <= 1.0) val = p.brow;
    }
    const double nose_top = eye_y + 0.05 * p.ry, nose_bottom = p.cy + 0.25 * p.ry;
    if (v > nose_top && v < nose_bottom && u > p.cx && u < p.cx + 0.06 * p.rx)
      val -= p.nose_shadow;
    if (ellipse(u, v, p.cx, nose_bottom, 0.16 * p.rx, 0.05 * p.ry) <= 1.0) val -= p.nose_shadow;
    const double mx = (u - p.cx) / (p.mouth_w * p.rx);
    if (std::abs(mx) <= 1.0) {
      const double centre = p.cy + p.mouth_y * p.ry + p.mouth_curve * p.ry * (mx * mx - 0.5);
      if (std::abs(v - centre) <= p.mouth_thick * p.ry * (1.0 - 0.5 * mx * mx)) val = p.mouth;
    }
  }
  return val;
}

}  // namespace

Image8 synth_face(std::uint64_t seed, int height, int width) {
  if (height < 16 || width < 16) throw ConfigError("synth_face: image must be at least 16x16");
  const FaceParams p = face_params(seed);
  constexpr int kSuper = 3;
  Image8 img(1, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx) {
          const double v = (y + (sy + 0.5) / kSuper) / height;
          const double u = (x + (sx + 0.5) / kSuper) / width;
          acc += shade(p, u, v);
        }
      img.at(y, x) = static_cast<std::uint8_t>(
          std::clamp(std::round(acc / (kSuper * kSuper)), 0.0, 255.0));
    }
  return img;
}

Corpus Corpus::synthetic(std::size_t count, std::uint64_t first_seed, int channels) {
  if (channels != 1 && channels != 3) throw ConfigError("synthetic corpus supports 1 or 3 channels");
  Corpus c;
  c.synthetic_ = true;
  c.count_ = count;
  c.first_seed_ = first_seed;
  c.channels_ = channels;
  return c;
}

Corpus Corpus::directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("corpus directory '" + dir.string() + "' not found");
  Corpus c;
  c.synthetic_ = false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm"))
      c.files_.push_back(entry.path());
  }
  std::sort(c.files_.begin(), c.files_.end());
  if (!c.files_.empty()) c.channels_ = load_image(c.files_.front()).channels;
  return c;
}

Tensor Corpus::image(std::size_t index, Scale scale) const {
  if (index >= size()) throw ConfigError("corpus index " + std::to_string(index) + " out of range");
  if (synthetic_) {
    Image8 gray = synth_face(first_seed_ + index, scale.height, scale.width);
    if (channels_ == 1) return to_tensor(gray);
    Image8 color(3, scale.height, scale.width);
    constexpr double tint[3] = {1.0, 0.88, 0.78};
    for (int y = 0; y < scale.height; ++y)
      for (int x = 0; x < scale.width; ++x)
        for (int c = 0; c < 3; ++c)
          color.at(y, x, c) = static_cast<std::uint8_t>(std::round(gray.at(y, x) * tint[c]));
    return to_tensor(color);
  }
  Image8 img = load_image(files_[index]);
  if (img.channels != channels_)
    throw ConfigError("corpus image '" + files_[index].string() + "' has " +
                      std::to_string(img.channels) + " channels, expected " +
                      std::to_string(channels_));
  if (img.height != scale.height || img.width != scale.width)
    img = resize_bilinear(img, scale.height, scale.width);
  return to_tensor(img);
}

Corpus Corpus::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw ConfigError("corpus slice out of range");
  Corpus c = *this;
  if (synthetic_) {
    c.first_seed_ = first_seed_ + begin;
    c.count_ = count;
  } else {
    c.files_.assign(files_.begin() + static_cast<std::ptrdiff_t>(begin),
                    files_.begin() + static_cast<std::ptrdiff_t>(begin + count));
  }
  return c;
}

CorpusSplit split_corpus(const Corpus& corpus, double train_fraction, double val_fraction) {
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0)
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  const std::size_t n = corpus.size();
  const auto n_train = static_cast<std::size_t>(std::floor(n * train_fraction));
  const auto n_val = static_cast<std::size_t>(std::floor(n * val_fraction));
  return {corpus.slice(0, n_train), corpus.slice(n_train, n_val),
          corpus.slice(n_train + n_val, n - n_train - n_val)};
}

ImagePair make_batch(const Corpus& corpus, Scale scale, const std::vector<std::size_t>& indices,
                     const DegradationSpec& spec, std::mt19937_64& rng) {
  if (indices.empty()) throw ConfigError("make_batch: empty batch");
  const int k = static_cast<int>(indices.size());
  const int c = corpus.channels();
  Tensor target(Shape{k, c, scale.height, scale.width});
  const std::size_t item = static_cast<std::size_t>(c) * scale.height * scale.width;
  for (int i = 0; i < k; ++i) {
    Tensor img = corpus.image(indices[i], scale);
    target.data().segment(static_cast<Eigen::Index>(i * item), static_cast<Eigen::Index>(item)) =
        img.data();
  }
  Tensor source = degrade(target, spec, rng);
  return {std::move(source), std::move(target), scale};
}

ImagePair make_batch(const Corpus& corpus, Scale scale, int batch_size,
                     const DegradationSpec& spec, std::mt19937_64& rng) {
  if (batch_size < 1) throw ConfigError("make_batch: batch size must be >= 1");
  if (corpus.empty()) throw ConfigError("make_batch: corpus is empty");
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  std::vector<std::size_t> indices(static_cast<std::size_t>(batch_size));
  for (auto& i : indices) i = pick(rng);
  return make_batch(corpus, scale, indices, spec, rng);
}

Image8 resize_bilinear(const Image8& image, int height, int width) {
  Image8 out(image.channels, height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c)) +
                         wy * ((1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c));
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return out;
}

Tensor pad_to(const Tensor& t, int height, int width) {
  const Shape s = t.shape();
  if (height < s.h || width < s.w) throw ConfigError("pad_to: target smaller than input");
  Tensor out(Shape{s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          out.at(n, c, y, x) = t.at(n, c, std::min(y, s.h - 1), std::min(x, s.w - 1));
  return out;
}

Tensor crop_to(const Tensor& t, int height, int width) {
  const Shape s = t.shape();
  if (height > s.h || width > s.w) throw ConfigError("crop_to: target larger than input");
  Tensor out(Shape{s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) out.plane(n, c) = t.plane(n, c).topLeftCorner(height, width);
  return out;
}

}  // namespace sgen
