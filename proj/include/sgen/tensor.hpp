#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>

#include "sgen/errors.hpp"

namespace sgen {

/// NCHW extents of a dense 4-D tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  constexpr std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  constexpr std::size_t plane() const noexcept {
    return static_cast<std::size_t>(h) * w;
  }
  constexpr bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrixX =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense NCHW tensor with row-major storage and an optional gradient buffer.
template <typename Scalar>
class BasicTensor {
 public:
  using scalar_type = Scalar;
  using Array = ArrayX<Scalar>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(check(shape)), data_(Array::Constant(shape.numel(), fill)) {}

  BasicTensor(Shape shape, Array data) : shape_(check(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != shape_.numel())
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values) : shape_(check(shape)) {
    if (values.size() != shape_.numel())
      throw ConfigError("initializer length " + std::to_string(values.size()) +
                        " does not match shape " + shape_.str());
    data_.resize(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (Scalar v : values) data_[i++] = v;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return shape_.numel(); }

  Array& data() noexcept { return data_; }
  const Array& data() const noexcept { return data_; }

  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

  Scalar& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  Scalar at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  /// The (h x w) plane of item n, channel c as a row-major matrix view.
  Eigen::Map<RowMatrixX<Scalar>> plane(int n, int c) {
    return {data_.data() + index(n, c, 0, 0), shape_.h, shape_.w};
  }
  Eigen::Map<const RowMatrixX<Scalar>> plane(int n, int c) const {
    return {data_.data() + index(n, c, 0, 0), shape_.h, shape_.w};
  }

  bool requires_grad = false;
  std::optional<Array> grad;

  void zero_grad() { grad = Array::Zero(data_.size()); }
  bool all_finite() const { return data_.allFinite(); }

 private:
  static Shape check(Shape s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw ConfigError("negative extent in shape " + s.str());
    return s;
  }
  Eigen::Index index(int n, int c, int y, int x) const {
    return ((static_cast<Eigen::Index>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{};
  Array data_;
};

using Tensor = BasicTensor<double>;

/// Number of worker threads: SGEN_THREADS if set, else hardware concurrency.
int worker_threads();

/// Runs fn(i) for i in [0, count) on up to worker_threads() threads.
/// Items are independent; callers reduce results in index order.
void parallel_for(int count, const std::function<void(int)>& fn);

namespace kernels {

/// Output extent of a strided window: floor((in + 2 pad - k) / stride) + 1.
constexpr int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Unfolds a (c, h, w) image into a (c*k*k) x (oh*ow) row-major column matrix.
template <typename Scalar>
void im2col(const Scalar* image, int channels, int height, int width, int k,
            int stride, int pad, int out_h, int out_w, RowMatrixX<Scalar>& cols) {
  cols.resize(static_cast<Eigen::Index>(channels) * k * k,
              static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < channels; ++c) {
    const Scalar* src = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* row = cols.data() + ((static_cast<Eigen::Index>(c) * k + ky) * k + kx) * cols.cols();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          Scalar* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, Scalar(0));
            continue;
          }
          const Scalar* line = src + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < width) ? line[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters (accumulates) columns back into a (c, h, w) image.
template <typename Scalar>
void col2im(const RowMatrixX<Scalar>& cols, int channels, int height, int width, int k,
            int stride, int pad, int out_h, int out_w, Scalar* image) {
  for (int c = 0; c < channels; ++c) {
    Scalar* dst = image + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* row =
            cols.data() + ((static_cast<Eigen::Index>(c) * k + ky) * k + kx) * cols.cols();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= height) continue;
          Scalar* line = dst + static_cast<std::size_t>(iy) * width;
          const Scalar* src = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < width) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace kernels
}  // namespace sgen
