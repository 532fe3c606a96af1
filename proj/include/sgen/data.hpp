#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sgen/image.hpp"
#include "sgen/tensor.hpp"

namespace sgen {

enum class NoiseKind { none, gaussian, uniform };

NoiseKind parse_noise(std::string_view name);
std::string to_string(NoiseKind kind);

/// Box-average downsample, additive noise in 8-bit units with clamping to
/// [0, 255], then nearest-neighbour upsample back to the input size.
struct DegradationSpec {
  int down_factor = 4;
  NoiseKind noise = NoiseKind::gaussian;
  double sigma = 30.0;       // gaussian standard deviation
  double uniform_lo = 0.0;   // uniform noise range
  double uniform_hi = 30.0;

  void validate() const;
};

struct Scale {
  int height = 0;
  int width = 0;
  bool operator==(const Scale&) const = default;
  std::string str() const { return std::to_string(height) + "x" + std::to_string(width); }
};

using ScaleSet = std::vector<Scale>;

/// Parses "HxW,HxW,...".
ScaleSet parse_scales(std::string_view text);
std::string format_scales(const ScaleSet& scales);

/// `count` scales linearly spaced between min and max (inclusive), each
/// dimension rounded to the nearest multiple of `divisor`.
ScaleSet sample_scales(Scale min, Scale max, int count, int divisor);

/// Throws unless every scale is divisible by `divisor`.
void check_scales(const ScaleSet& scales, int divisor);

/// The six evaluation scales from 128x96 to 208x176.
ScaleSet full_scales();
/// Desk-sized training scales 48x32, 64x48, 80x64.
ScaleSet desk_scales();

/// Raw noise samples in 8-bit units, drawn exactly as degrade() draws them.
Eigen::ArrayXd sample_noise(const DegradationSpec& spec, std::mt19937_64& rng, std::size_t count);

/// Degrades every item of a clean [-1, 1] batch. Output shape equals input shape.
Tensor degrade(const Tensor& clean, const DegradationSpec& spec, std::mt19937_64& rng);

/// Procedural grayscale face: background gradient, hair, face ellipse with
/// shading, eyes with pupils, brows, nose and a mouth arc. Geometry is defined
/// in normalized coordinates so one seed renders the same face at any size.
Image8 synth_face(std::uint64_t seed, int height, int width);

/// Ordered image source: procedural faces or PGM/PPM files on disk.
class Corpus {
 public:
  static Corpus synthetic(std::size_t count, std::uint64_t first_seed = 0, int channels = 1);
  /// Flat directory of .pgm/.ppm files, sorted lexicographically.
  static Corpus directory(const std::filesystem::path& dir);

  std::size_t size() const noexcept { return synthetic_ ? count_ : files_.size(); }
  bool empty() const noexcept { return size() == 0; }
  int channels() const noexcept { return channels_; }

  /// Clean image `index` at the given scale as a (1, c, h, w) tensor in [-1, 1].
  Tensor image(std::size_t index, Scale scale) const;

  /// Contiguous sub-range [begin, begin + count).
  Corpus slice(std::size_t begin, std::size_t count) const;

 private:
  bool synthetic_ = true;
  std::size_t count_ = 0;
  std::uint64_t first_seed_ = 0;
  int channels_ = 1;
  std::vector<std::filesystem::path> files_;
};

/// Train/validation/test partition by order of the corpus.
struct CorpusSplit {
  Corpus train;
  Corpus val;
  Corpus test;
};

CorpusSplit split_corpus(const Corpus& corpus, double train_fraction, double val_fraction);

/// Degraded source and clean target batches at one scale.
struct ImagePair {
  Tensor source;
  Tensor target;
  Scale scale;
};

/// K random images from the corpus, each degraded independently.
ImagePair make_batch(const Corpus& corpus, Scale scale, int batch_size,
                     const DegradationSpec& spec, std::mt19937_64& rng);

/// Stacks the given corpus items into one batch and degrades them.
ImagePair make_batch(const Corpus& corpus, Scale scale, const std::vector<std::size_t>& indices,
                     const DegradationSpec& spec, std::mt19937_64& rng);

/// Bilinear resize of a single image (used for on-disk corpora).
Image8 resize_bilinear(const Image8& image, int height, int width);

/// Replicate-pads a batch on the bottom/right to the given extent.
Tensor pad_to(const Tensor& t, int height, int width);
/// Top-left crop of a batch.
Tensor crop_to(const Tensor& t, int height, int width);

}  // namespace sgen
