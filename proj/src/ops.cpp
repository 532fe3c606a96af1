#include <cmath>
#include <vector>

#include "sgen/graph.hpp"

namespace sgen {
namespace {

using RowMatrix = RowMatrixX<double>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

Graph& same_graph(const char* op, std::initializer_list<const Var*> vars) {
  Graph* g = nullptr;
  for (const Var* v : vars) {
    if (!v->valid()) throw UsageError(std::string(op) + ": input is not attached to a graph");
    if (g && v->graph() != g) throw UsageError(std::string(op) + ": inputs live on different graphs");
    g = v->graph();
  }
  return *g;
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                      b.shape().str());
}

struct Geometry {
  int n, in_c, in_h, in_w;  // image side of the unfold
  int out_c;                // channels on the column side
  int k, stride, pad;
  int col_h, col_w;         // spatial extent of the column side
};

// Accumulates per-item kernel/bias gradients in item order so that the
// result does not depend on the thread count.
void reduce_in_order(const std::vector<Eigen::ArrayXd>& parts, Eigen::ArrayXd& total) {
  total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total += parts[i];
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, const Var& bias, int stride, int padding) {
  Graph& g = same_graph("conv2d", {&input, &kernel, &bias});
  const Shape xs = input.shape();
  const Shape ks = kernel.shape();
  if (ks.c != xs.c)
    throw ConfigError("conv2d: input shape " + xs.str() + " incompatible with kernel shape " +
                      ks.str());
  if (ks.h != ks.w) throw ConfigError("conv2d: non-square kernel shape " + ks.str());
  if (bias.shape().numel() != static_cast<std::size_t>(ks.n))
    throw ConfigError("conv2d: bias shape " + bias.shape().str() + " does not match kernel " +
                      ks.str());
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  const int k = ks.h;
  const int oh = kernels::conv_out_extent(xs.h, k, stride, padding);
  const int ow = kernels::conv_out_extent(xs.w, k, stride, padding);
  if (xs.h + 2 * padding < k || xs.w + 2 * padding < k || oh < 1 || ow < 1)
    throw ConfigError("conv2d: input shape " + xs.str() + " too small for kernel shape " +
                      ks.str());

  const Geometry geo{xs.n, xs.c, xs.h, xs.w, ks.n, k, stride, padding, oh, ow};
  const Shape out_shape{xs.n, ks.n, oh, ow};
  const Eigen::Index kdim = static_cast<Eigen::Index>(xs.c) * k * k;
  const Eigen::Index pdim = static_cast<Eigen::Index>(oh) * ow;

  Eigen::ArrayXd out(out_shape.numel());
  {
    const ConstMatMap w(kernel.value().data(), ks.n, kdim);
    const Eigen::VectorXd b = bias.value().matrix();
    const double* x = input.value().data();
    parallel_for(xs.n, [&](int i) {
      RowMatrix cols;
      kernels::im2col(x + i * static_cast<std::size_t>(xs.c) * xs.plane(), xs.c, xs.h, xs.w, k,
                      stride, padding, oh, ow, cols);
      MatMap y(out.data() + i * static_cast<std::size_t>(ks.n) * pdim, ks.n, pdim);
      y.noalias() = w * cols;
      y.colwise() += b;
    });
  }

  const std::size_t xi = input.id(), ki = kernel.id(), bi = bias.id();
  return g.record("conv2d", out_shape, std::move(out), {xi, ki, bi},
                  [geo, xi, ki, bi, kdim, pdim](Graph& gr, std::size_t self) {
    const Eigen::ArrayXd& dy = gr.node(self).grad;
    const Eigen::ArrayXd& x = gr.node(xi).value;
    const ConstMatMap w(gr.node(ki).value.data(), geo.out_c, kdim);
    const std::size_t x_item = static_cast<std::size_t>(geo.in_c) * geo.in_h * geo.in_w;
    const std::size_t y_item = static_cast<std::size_t>(geo.out_c) * pdim;
    const bool need_x = gr.node(xi).requires_grad;
    const bool need_k = gr.node(ki).requires_grad;
    const bool need_b = gr.node(bi).requires_grad;

    Eigen::ArrayXd dx;
    if (need_x) dx = Eigen::ArrayXd::Zero(x.size());
    std::vector<Eigen::ArrayXd> dk(need_k ? geo.n : 0), db(need_b ? geo.n : 0);

    parallel_for(geo.n, [&](int i) {
      const ConstMatMap dyi(dy.data() + i * y_item, geo.out_c, pdim);
      if (need_x) {
        RowMatrix dcols = w.transpose() * dyi;
        kernels::col2im(dcols, geo.in_c, geo.in_h, geo.in_w, geo.k, geo.stride, geo.pad,
                        geo.col_h, geo.col_w, dx.data() + i * x_item);
      }
      if (need_k) {
        RowMatrix cols;
        kernels::im2col(x.data() + i * x_item, geo.in_c, geo.in_h, geo.in_w, geo.k, geo.stride,
                        geo.pad, geo.col_h, geo.col_w, cols);
        RowMatrix part = dyi * cols.transpose();
        dk[i] = Eigen::Map<const Eigen::ArrayXd>(part.data(), part.size());
      }
      if (need_b) db[i] = dyi.rowwise().sum().array();
    });

    if (need_x) gr.accumulate(xi, dx);
    Eigen::ArrayXd total;
    if (need_k) {
      reduce_in_order(dk, total);
      gr.accumulate(ki, total);
    }
    if (need_b) {
      reduce_in_order(db, total);
      gr.accumulate(bi, total);
    }
  });
}

Var deconv2d(const Var& input, const Var& kernel, const Var& bias, int factor) {
  Graph& g = same_graph("deconv2d", {&input, &kernel, &bias});
  const Shape xs = input.shape();
  const Shape ks = kernel.shape();  // (in_c, out_c, k, k)
  if (factor < 1) throw ConfigError("deconv2d: factor must be >= 1");
  if (ks.n != xs.c)
    throw ConfigError("deconv2d: input shape " + xs.str() + " incompatible with kernel shape " +
                      ks.str());
  if (ks.h != ks.w) throw ConfigError("deconv2d: non-square kernel shape " + ks.str());
  const int k = ks.h;
  if (k < factor || (k - factor) % 2 != 0)
    throw ConfigError("deconv2d: kernel size " + std::to_string(k) + " cannot upsample by exactly " +
                      std::to_string(factor) + " (need k >= factor and k - factor even)");
  if (bias.shape().numel() != static_cast<std::size_t>(ks.c))
    throw ConfigError("deconv2d: bias shape " + bias.shape().str() + " does not match kernel " +
                      ks.str());
  const int pad = (k - factor) / 2;
  const int oh = xs.h * factor;
  const int ow = xs.w * factor;
  const int out_c = ks.c;

  // Column side is the input grid; image side is the upsampled output.
  const Geometry geo{xs.n, out_c, oh, ow, xs.c, k, factor, pad, xs.h, xs.w};
  const Shape out_shape{xs.n, out_c, oh, ow};
  const Eigen::Index kdim = static_cast<Eigen::Index>(out_c) * k * k;
  const Eigen::Index pdim = static_cast<Eigen::Index>(xs.h) * xs.w;
  const std::size_t out_item = static_cast<std::size_t>(out_c) * oh * ow;

  Eigen::ArrayXd out(out_shape.numel());
  {
    const ConstMatMap w(kernel.value().data(), xs.c, kdim);
    const Eigen::ArrayXd& b = bias.value();
    const double* x = input.value().data();
    parallel_for(xs.n, [&](int i) {
      const ConstMatMap xi(x + i * static_cast<std::size_t>(xs.c) * pdim, xs.c, pdim);
      RowMatrix cols = w.transpose() * xi;
      double* yi = out.data() + i * out_item;
      for (int c = 0; c < out_c; ++c)
        std::fill(yi + c * static_cast<std::size_t>(oh) * ow,
                  yi + (c + 1) * static_cast<std::size_t>(oh) * ow, b[c]);
      kernels::col2im(cols, out_c, oh, ow, k, factor, pad, xs.h, xs.w, yi);
    });
  }

  const std::size_t xi = input.id(), ki = kernel.id(), bi = bias.id();
  return g.record("deconv2d", out_shape, std::move(out), {xi, ki, bi},
                  [geo, xi, ki, bi, kdim, pdim, out_item](Graph& gr, std::size_t self) {
    const Eigen::ArrayXd& dy = gr.node(self).grad;
    const Eigen::ArrayXd& x = gr.node(xi).value;
    const ConstMatMap w(gr.node(ki).value.data(), geo.out_c, kdim);
    const std::size_t x_item = static_cast<std::size_t>(geo.out_c) * pdim;
    const std::size_t plane = static_cast<std::size_t>(geo.in_h) * geo.in_w;
    const bool need_x = gr.node(xi).requires_grad;
    const bool need_k = gr.node(ki).requires_grad;
    const bool need_b = gr.node(bi).requires_grad;

    Eigen::ArrayXd dx;
    if (need_x) dx.resize(x.size());
    std::vector<Eigen::ArrayXd> dk(need_k ? geo.n : 0), db(need_b ? geo.n : 0);

    parallel_for(geo.n, [&](int i) {
      const double* dyi = dy.data() + i * out_item;
      if (need_x || need_k) {
        RowMatrix dcols;
        kernels::im2col(dyi, geo.in_c, geo.in_h, geo.in_w, geo.k, geo.stride, geo.pad,
                        geo.col_h, geo.col_w, dcols);
        if (need_x) {
          MatMap dxi(dx.data() + i * x_item, geo.out_c, pdim);
          dxi.noalias() = w * dcols;
        }
        if (need_k) {
          const ConstMatMap xi_mat(x.data() + i * x_item, geo.out_c, pdim);
          RowMatrix part = xi_mat * dcols.transpose();
          dk[i] = Eigen::Map<const Eigen::ArrayXd>(part.data(), part.size());
        }
      }
      if (need_b) {
        Eigen::ArrayXd b(geo.in_c);
        for (int c = 0; c < geo.in_c; ++c)
          b[c] = Eigen::Map<const Eigen::ArrayXd>(dyi + c * plane, plane).sum();
        db[i] = std::move(b);
      }
    });

    if (need_x) gr.accumulate(xi, dx);
    Eigen::ArrayXd total;
    if (need_k) {
      reduce_in_order(dk, total);
      gr.accumulate(ki, total);
    }
    if (need_b) {
      reduce_in_order(db, total);
      gr.accumulate(bi, total);
    }
  });
}

Var activation(Activation kind, const Var& input, double alpha) {
  Graph& g = same_graph("activation", {&input});
  const Eigen::ArrayXd& x = input.value();
  Eigen::ArrayXd y;
  const char* name = "";
  switch (kind) {
    case Activation::relu:
      name = "relu";
      y = x.max(0.0);
      break;
    case Activation::lrelu:
      name = "lrelu";
      y = (x > 0.0).select(x, alpha * x);
      break;
    case Activation::sigmoid:
      name = "sigmoid";
      y = 1.0 / (1.0 + (-x).exp());
      break;
    case Activation::tanh:
      name = "tanh";
      y = x.tanh();
      break;
  }
  const std::size_t xi = input.id();
  return g.record(name, input.shape(), std::move(y), {xi},
                  [kind, alpha, xi](Graph& gr, std::size_t self) {
    const auto& dy = gr.node(self).grad;
    const auto& x = gr.node(xi).value;
    const auto& y = gr.node(self).value;
    switch (kind) {
      case Activation::relu:
        gr.accumulate(xi, (x > 0.0).select(dy, 0.0));
        break;
      case Activation::lrelu:
        gr.accumulate(xi, (x > 0.0).select(dy, alpha * dy));
        break;
      case Activation::sigmoid:
        gr.accumulate(xi, dy * y * (1.0 - y));
        break;
      case Activation::tanh:
        gr.accumulate(xi, dy * (1.0 - y.square()));
        break;
    }
  });
}

Var add(const Var& a, const Var& b) {
  Graph& g = same_graph("add", {&a, &b});
  require_same_shape("add", a, b);
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("add", a.shape(), a.value() + b.value(), {ai, bi},
                  [ai, bi](Graph& gr, std::size_t self) {
    const Eigen::ArrayXd dy = gr.node(self).grad;
    gr.accumulate(ai, dy);
    gr.accumulate(bi, dy);
  });
}

Var mul(const Var& a, const Var& b) {
  Graph& g = same_graph("mul", {&a, &b});
  require_same_shape("mul", a, b);
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("mul", a.shape(), a.value() * b.value(), {ai, bi},
                  [ai, bi](Graph& gr, std::size_t self) {
    const Eigen::ArrayXd dy = gr.node(self).grad;
    gr.accumulate(ai, dy * gr.node(bi).value);
    gr.accumulate(bi, dy * gr.node(ai).value);
  });
}

Var maximum(const Var& a, const Var& b) {
  Graph& g = same_graph("maximum", {&a, &b});
  require_same_shape("maximum", a, b);
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("maximum", a.shape(), a.value().max(b.value()), {ai, bi},
                  [ai, bi](Graph& gr, std::size_t self) {
    const Eigen::ArrayXd dy = gr.node(self).grad;
    const auto take_a = gr.node(ai).value >= gr.node(bi).value;
    gr.accumulate(ai, take_a.select(dy, 0.0));
    gr.accumulate(bi, take_a.select(0.0, dy));
  });
}

Var affine(const Var& x, double scale, double shift) {
  Graph& g = same_graph("affine", {&x});
  const std::size_t xi = x.id();
  return g.record("affine", x.shape(), scale * x.value() + shift, {xi},
                  [xi, scale](Graph& gr, std::size_t self) {
    gr.accumulate(xi, scale * gr.node(self).grad);
  });
}

Var concat_channels(const Var& a, const Var& b) {
  Graph& g = same_graph("concat_channels", {&a, &b});
  const Shape as = a.shape(), bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w)
    throw ConfigError("concat_channels: shape mismatch " + as.str() + " vs " + bs.str());
  const Shape os{as.n, as.c + bs.c, as.h, as.w};
  const std::size_t plane = as.plane();
  const std::size_t a_item = as.c * plane, b_item = bs.c * plane, o_item = os.c * plane;
  Eigen::ArrayXd out(os.numel());
  for (int i = 0; i < as.n; ++i) {
    out.segment(i * o_item, a_item) = a.value().segment(i * a_item, a_item);
    out.segment(i * o_item + a_item, b_item) = b.value().segment(i * b_item, b_item);
  }
  const std::size_t ai = a.id(), bi = b.id();
  const int n = as.n;
  return g.record("concat_channels", os, std::move(out), {ai, bi},
                  [=](Graph& gr, std::size_t self) {
    const Eigen::ArrayXd& dy = gr.node(self).grad;
    Eigen::ArrayXd da(n * a_item), db(n * b_item);
    for (int i = 0; i < n; ++i) {
      da.segment(i * a_item, a_item) = dy.segment(i * o_item, a_item);
      db.segment(i * b_item, b_item) = dy.segment(i * o_item + a_item, b_item);
    }
    gr.accumulate(ai, da);
    gr.accumulate(bi, db);
  });
}

Var global_avg_pool(const Var& x) {
  Graph& g = same_graph("global_avg_pool", {&x});
  const Shape xs = x.shape();
  if (xs.h < 1 || xs.w < 1) throw ConfigError("global_avg_pool: empty plane in " + xs.str());
  const Eigen::Index planes = static_cast<Eigen::Index>(xs.n) * xs.c;
  const Eigen::Index plane = static_cast<Eigen::Index>(xs.plane());
  Eigen::Map<const Eigen::MatrixXd> m(x.value().data(), plane, planes);
  Eigen::ArrayXd out = m.colwise().mean().transpose().array();
  const std::size_t xi = x.id();
  return g.record("global_avg_pool", Shape{xs.n, xs.c, 1, 1}, std::move(out), {xi},
                  [xi, planes, plane](Graph& gr, std::size_t self) {
    const Eigen::ArrayXd& dy = gr.node(self).grad;
    Eigen::ArrayXd dx(planes * plane);
    for (Eigen::Index p = 0; p < planes; ++p)
      dx.segment(p * plane, plane).setConstant(dy[p] / static_cast<double>(plane));
    gr.accumulate(xi, dx);
  });
}

Var sum(const Var& x) {
  Graph& g = same_graph("sum", {&x});
  const std::size_t xi = x.id();
  const Eigen::Index size = x.value().size();
  return g.record("sum", Shape{1, 1, 1, 1}, Eigen::ArrayXd::Constant(1, x.value().sum()), {xi},
                  [xi, size](Graph& gr, std::size_t self) {
    gr.accumulate(xi, Eigen::ArrayXd::Constant(size, gr.node(self).grad[0]));
  });
}

Var mean(const Var& x) {
  Graph& g = same_graph("mean", {&x});
  const std::size_t xi = x.id();
  const Eigen::Index size = x.value().size();
  if (size == 0) throw ConfigError("mean: empty tensor");
  return g.record("mean", Shape{1, 1, 1, 1}, Eigen::ArrayXd::Constant(1, x.value().mean()), {xi},
                  [xi, size](Graph& gr, std::size_t self) {
    gr.accumulate(xi,
                  Eigen::ArrayXd::Constant(size, gr.node(self).grad[0] / static_cast<double>(size)));
  });
}

Var log_clamped(const Var& x, double floor) {
  Graph& g = same_graph("log_clamped", {&x});
  const std::size_t xi = x.id();
  return g.record("log_clamped", x.shape(), x.value().max(floor).log(), {xi},
                  [xi, floor](Graph& gr, std::size_t self) {
    const auto& xv = gr.node(xi).value;
    gr.accumulate(xi, (xv > floor).select(gr.node(self).grad / xv, 0.0));
  });
}

Var mse_loss(const Var& a, const Var& b) {
  Graph& g = same_graph("mse_loss", {&a, &b});
  require_same_shape("mse_loss", a, b);
  const Eigen::Index size = a.value().size();
  if (size == 0) throw ConfigError("mse_loss: empty tensors");
  const double value = (a.value() - b.value()).square().mean();
  const std::size_t ai = a.id(), bi = b.id();
  return g.record("mse_loss", Shape{1, 1, 1, 1}, Eigen::ArrayXd::Constant(1, value), {ai, bi},
                  [ai, bi, size](Graph& gr, std::size_t self) {
    const double scale = 2.0 * gr.node(self).grad[0] / static_cast<double>(size);
    const Eigen::ArrayXd diff = gr.node(ai).value - gr.node(bi).value;
    gr.accumulate(ai, scale * diff);
    gr.accumulate(bi, -scale * diff);
  });
}

}  // namespace sgen
