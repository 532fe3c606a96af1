#include "sgen/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace sgen {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

Eigen::VectorXd gaussian_taps() {
  Eigen::VectorXd g(kWindow);
  const int r = kWindow / 2;
  for (int i = 0; i < kWindow; ++i) g[i] = std::exp(-((i - r) * (i - r)) / (2.0 * kSigma * kSigma));
  return g / g.sum();
}

// Valid-region separable filtering of an h x w plane.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& img, const Eigen::VectorXd& taps) {
  const Eigen::Index oh = img.rows() - kWindow + 1, ow = img.cols() - kWindow + 1;
  Eigen::MatrixXd rows(oh, img.cols());
  for (Eigen::Index y = 0; y < oh; ++y) rows.row(y) = taps.transpose() * img.middleRows(y, kWindow);
  Eigen::MatrixXd out(oh, ow);
  for (Eigen::Index x = 0; x < ow; ++x) out.col(x) = rows.middleCols(x, kWindow) * taps;
  return out;
}

Eigen::MatrixXd luma(const Tensor& t) {
  const Shape s = t.shape();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(s.h, s.w);
  for (int c = 0; c < s.c; ++c) m += t.plane(0, c).cast<double>();
  return m / s.c;
}

}  // namespace

Tensor to_pixel_scale(const Tensor& normalized) {
  return Tensor(normalized.shape(), (normalized.data() + 1.0) * 127.5);
}

double psnr(const Tensor& a, const Tensor& b, double max_val) {
  if (a.shape() != b.shape())
    throw ConfigError("psnr: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  const double mse = (a.data() - b.data()).square().mean();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

double ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ConfigError("ssim: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  if (a.shape().n != 1) throw ConfigError("ssim: expects a single image, got " + a.shape().str());
  if (a.shape().h < kWindow || a.shape().w < kWindow)
    throw ConfigError("ssim: image " + a.shape().str() + " is smaller than the 11x11 window");
  constexpr double L = 255.0;
  constexpr double C1 = (0.01 * L) * (0.01 * L);
  constexpr double C2 = (0.03 * L) * (0.03 * L);
  const Eigen::VectorXd taps = gaussian_taps();
  const Eigen::MatrixXd x = luma(a), y = luma(b);
  const Eigen::ArrayXXd mx = filter_valid(x, taps).array();
  const Eigen::ArrayXXd my = filter_valid(y, taps).array();
  const Eigen::ArrayXXd sxx = filter_valid(x.cwiseProduct(x), taps).array() - mx * mx;
  const Eigen::ArrayXXd syy = filter_valid(y.cwiseProduct(y), taps).array() - my * my;
  const Eigen::ArrayXXd sxy = filter_valid(x.cwiseProduct(y), taps).array() - mx * my;
  const Eigen::ArrayXXd map = ((2.0 * mx * my + C1) * (2.0 * sxy + C2)) /
                              ((mx * mx + my * my + C1) * (sxx + syy + C2));
  return map.mean();
}

MetricReport evaluate(const Restorer& restorer, const Corpus& corpus, const ScaleSet& scales,
                      const DegradationSpec& spec, const EvalOptions& options) {
  if (corpus.empty()) throw ConfigError("evaluate: held-out corpus is empty");
  if (options.batch_size < 1) throw ConfigError("evaluate: batch size must be >= 1");
  MetricReport report;
  double psnr_total = 0.0, ssim_total = 0.0;
  for (std::size_t si = 0; si < scales.size(); ++si) {
    const Scale scale = scales[si];
    MetricRow row{scale, 0.0, 0.0, 0};
    for (std::size_t begin = 0; begin < corpus.size(); begin += options.batch_size) {
      const std::size_t end = std::min(corpus.size(), begin + options.batch_size);
      std::vector<std::size_t> idx;
      for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
      std::mt19937_64 rng(options.seed ^ (0x9E3779B97F4A7C15ULL * (si + 1)) ^ (begin * 0x100000001B3ULL));
      const ImagePair pair = make_batch(corpus, scale, idx, spec, rng);
      const Tensor restored = restorer(pair.source, pair.target);
      if (restored.shape() != pair.target.shape())
        throw ConfigError("evaluate: restorer returned shape " + restored.shape().str() +
                          ", expected " + pair.target.shape().str());
      const Shape s = pair.target.shape();
      const std::size_t item = static_cast<std::size_t>(s.c) * s.h * s.w;
      for (int i = 0; i < s.n; ++i) {
        const Shape one{1, s.c, s.h, s.w};
        auto slice = [&](const Tensor& t) {
          return to_pixel_scale(Tensor(one, t.data().segment(static_cast<Eigen::Index>(i * item),
                                                             static_cast<Eigen::Index>(item))));
        };
        const Tensor r = slice(restored), t = slice(pair.target);
        row.psnr += psnr(r, t);
        row.ssim += ssim(r, t);
        ++row.count;
      }
    }
    psnr_total += row.psnr;
    ssim_total += row.ssim;
    report.count += row.count;
    row.psnr /= static_cast<double>(row.count);
    row.ssim /= static_cast<double>(row.count);
    report.rows.push_back(row);
  }
  report.mean_psnr = psnr_total / static_cast<double>(report.count);
  report.mean_ssim = ssim_total / static_cast<double>(report.count);
  return report;
}

void write_report_csv(const MetricReport& report, std::ostream& out) {
  out << "scale,psnr,ssim,n\n" << std::fixed;
  for (const auto& r : report.rows)
    out << r.scale.str() << ',' << std::setprecision(4) << r.psnr << ',' << std::setprecision(6)
        << r.ssim << ',' << r.count << '\n';
  out << "mean," << std::setprecision(4) << report.mean_psnr << ',' << std::setprecision(6)
      << report.mean_ssim << ',' << report.count << '\n';
  out << std::defaultfloat;
}

void write_report_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report '" + path.string() + "'");
  write_report_csv(report, out);
}

}  // namespace sgen
