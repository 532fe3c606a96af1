#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <vector>

#include "sgen/data.hpp"
#include "sgen/tensor.hpp"

namespace sgen {

/// Reported in place of +inf for identical images.
inline constexpr double kPsnrCap = 99.0;

/// Maps [-1, 1] values to the 8-bit scale [0, 255] without quantizing.
Tensor to_pixel_scale(const Tensor& normalized);

/// 10 log10(max_val^2 / mse) over all elements, capped at kPsnrCap.
double psnr(const Tensor& a, const Tensor& b, double max_val = 255.0);

/// Mean local SSIM of two single images on the 8-bit scale: 11x11 Gaussian
/// window (sigma 1.5) over valid positions, K1 = 0.01, K2 = 0.03, L = 255.
/// Multi-channel inputs are reduced to their channel mean first.
double ssim(const Tensor& a, const Tensor& b);

struct MetricRow {
  Scale scale;
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t count = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::size_t count = 0;
};

/// Produces a restored batch from a degraded source (and its clean target,
/// which only oracle restorers look at).
using Restorer = std::function<Tensor(const Tensor& source, const Tensor& target)>;

struct EvalOptions {
  std::uint64_t seed = 12345;  // degradation noise for the held-out set
  int batch_size = 8;
};

/// Degrades every corpus image at every scale (deterministically from the
/// seed), restores it, and averages PSNR/SSIM per scale in input order.
MetricReport evaluate(const Restorer& restorer, const Corpus& corpus, const ScaleSet& scales,
                      const DegradationSpec& spec, const EvalOptions& options = {});

/// CSV with header scale,psnr,ssim,n and a final "mean" row.
void write_report_csv(const MetricReport& report, std::ostream& out);
void write_report_csv(const MetricReport& report, const std::filesystem::path& path);

}  // namespace sgen
