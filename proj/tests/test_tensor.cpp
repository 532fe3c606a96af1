#include <cmath>
#include <random>

#include "doctest.h"
#include "sgen/adam.hpp"
#include "sgen/graph.hpp"
#include "test_support.hpp"

using namespace sgen;
using sgen::testing::gradient_check;
using sgen::testing::probe_loss;
using sgen::testing::random_tensor;

namespace {

// Direct six-loop convolution used as the reference for conv2d.
Tensor naive_conv(const Tensor& x, const Tensor& k, const Tensor& b, int stride, int pad) {
  const Shape xs = x.shape(), ks = k.shape();
  const int oh = (xs.h + 2 * pad - ks.h) / stride + 1;
  const int ow = (xs.w + 2 * pad - ks.w) / stride + 1;
  Tensor y(Shape{xs.n, ks.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ks.n; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b[o];
          for (int c = 0; c < xs.c; ++c)
            for (int ky = 0; ky < ks.h; ++ky)
              for (int kx = 0; kx < ks.w; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < xs.h && ix >= 0 && ix < xs.w)
                  acc += x.at(n, c, iy, ix) * k.at(o, c, ky, kx);
              }
          y.at(n, o, oy, ox) = acc;
        }
  return y;
}

// Scatter form of the transposed convolution: every input pixel stamps the
// kernel into the upsampled grid.
Tensor naive_deconv(const Tensor& x, const Tensor& k, const Tensor& b, int factor) {
  const Shape xs = x.shape(), ks = k.shape();
  const int pad = (ks.h - factor) / 2;
  Tensor y(Shape{xs.n, ks.c, xs.h * factor, xs.w * factor});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ks.c; ++o)
      for (int yy = 0; yy < y.shape().h; ++yy)
        for (int xx = 0; xx < y.shape().w; ++xx) y.at(n, o, yy, xx) = b[o];
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int iy = 0; iy < xs.h; ++iy)
        for (int ix = 0; ix < xs.w; ++ix)
          for (int o = 0; o < ks.c; ++o)
            for (int ky = 0; ky < ks.h; ++ky)
              for (int kx = 0; kx < ks.w; ++kx) {
                const int oy = iy * factor - pad + ky, ox = ix * factor - pad + kx;
                if (oy >= 0 && oy < y.shape().h && ox >= 0 && ox < y.shape().w)
                  y.at(n, o, oy, ox) += x.at(n, c, iy, ix) * k.at(c, o, ky, kx);
              }
  return y;
}

Tensor run_conv(const Tensor& x, const Tensor& k, const Tensor& b, int stride, int pad) {
  Graph g;
  return conv2d(g.constant(x), g.constant(k), g.constant(b), stride, pad).detach();
}

Tensor run_deconv(const Tensor& x, const Tensor& k, const Tensor& b, int factor) {
  Graph g;
  return deconv2d(g.constant(x), g.constant(k), g.constant(b), factor).detach();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  return (a.data() - b.data()).abs().maxCoeff();
}

}  // namespace

TEST_CASE("conv2d: identity and sum kernels") {
  Tensor ones(Shape{1, 1, 4, 4}, 1.0);
  Tensor id(Shape{1, 1, 1, 1}, 1.0);
  Tensor zero_b(Shape{1, 1, 1, 1});
  Tensor y = run_conv(ones, id, zero_b, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 4, 4});
  CHECK((y.data() == 1.0).all());

  Tensor x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor k(Shape{1, 1, 2, 2}, 1.0);
  Tensor s = run_conv(x, k, zero_b, 1, 0);
  CHECK(s.shape() == Shape{1, 1, 1, 1});
  CHECK(s[0] == 10.0);
}

TEST_CASE("conv2d matches the naive loop reference") {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({2, 3, 8, 8}, rng);
  Tensor k = random_tensor({4, 3, 3, 3}, rng);
  Tensor b = random_tensor({1, 4, 1, 1}, rng);
  Tensor y = run_conv(x, k, b, 2, 1);
  CHECK(y.shape() == Shape{2, 4, 4, 4});
  CHECK(max_abs_diff(y, naive_conv(x, k, b, 2, 1)) < 1e-10);

  for (auto [stride, pad, ksz] : {std::tuple{1, 1, 3}, {4, 2, 5}, {8, 3, 7}, {1, 0, 1}}) {
    Tensor xi = random_tensor({1, 2, 16, 16}, rng);
    Tensor ki = random_tensor({3, 2, ksz, ksz}, rng);
    Tensor bi = random_tensor({1, 3, 1, 1}, rng);
    CHECK(max_abs_diff(run_conv(xi, ki, bi, stride, pad), naive_conv(xi, ki, bi, stride, pad)) <
          1e-10);
  }
}

TEST_CASE("conv2d rejects mismatched shapes") {
  Graph g;
  Var x = g.constant(Tensor(Shape{1, 2, 4, 4}));
  Var k = g.constant(Tensor(Shape{1, 3, 3, 3}));
  Var b = g.constant(Tensor(Shape{1, 1, 1, 1}));
  try {
    conv2d(x, k, b, 1, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("1x2x4x4") != std::string::npos);
    CHECK(msg.find("1x3x3x3") != std::string::npos);
  }
  Var big = g.constant(Tensor(Shape{1, 2, 5, 5}));
  Var small = g.constant(Tensor(Shape{1, 2, 2, 2}));
  CHECK_THROWS_AS(conv2d(small, big, b, 1, 0), ConfigError);
  CHECK_THROWS_AS(conv2d(x, g.constant(Tensor(Shape{1, 2, 3, 3})), b, 0, 1), ConfigError);
}

TEST_CASE("deconv2d: identity, stamping and naive reference") {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({1, 2, 3, 3}, rng);
  Tensor eye(Shape{2, 2, 1, 1});
  eye.at(0, 0, 0, 0) = 1.0;
  eye.at(1, 1, 0, 0) = 1.0;
  CHECK(max_abs_diff(run_deconv(x, eye, Tensor(Shape{1, 2, 1, 1}), 1), x) == 0.0);

  Tensor one(Shape{1, 1, 1, 1}, 1.0);
  Tensor stamped = run_deconv(one, Tensor(Shape{1, 1, 2, 2}, 1.0), Tensor(Shape{1, 1, 1, 1}), 2);
  CHECK(stamped.shape() == Shape{1, 1, 2, 2});
  CHECK((stamped.data() == 1.0).all());

  for (int factor : {2, 4, 8}) {
    Tensor k = random_tensor({2, 3, 2 * factor, 2 * factor}, rng);
    Tensor b = random_tensor({1, 3, 1, 1}, rng);
    Tensor y = run_deconv(x, k, b, factor);
    CHECK(y.shape() == Shape{1, 3, 3 * factor, 3 * factor});
    CHECK(max_abs_diff(y, naive_deconv(x, k, b, factor)) < 1e-10);
  }
}

TEST_CASE("deconv2d equals the input gradient of the matching conv2d") {
  // conv with stride f, pad (k - f) / 2 maps 6x6 -> 3x3; its input gradient
  // for upstream y is deconv(y) with the same kernel array.
  std::mt19937_64 rng(3);
  const int factor = 2, k = 4;
  Tensor y = random_tensor({1, 2, 3, 3}, rng);
  Tensor kernel = random_tensor({2, 3, k, k}, rng);
  Tensor zero_b(Shape{1, 2, 1, 1});

  Tensor x(Shape{1, 3, 6, 6});
  x.requires_grad = true;
  {
    Graph g;
    Var out = conv2d(g.param(x), g.constant(kernel), g.constant(zero_b), factor, (k - factor) / 2);
    REQUIRE(out.shape() == y.shape());
    g.backward(sum(mul(out, g.constant(y))));
  }
  Tensor adjoint(Shape{1, 3, 6, 6}, *x.grad);
  Tensor up = run_deconv(y, kernel, Tensor(Shape{1, 3, 1, 1}), factor);
  CHECK(max_abs_diff(up, adjoint) < 1e-10);

  // <conv(x), y> == <x, deconv(y)> for random x.
  Tensor xr = random_tensor({1, 3, 6, 6}, rng);
  const double lhs = (run_conv(xr, kernel, zero_b, factor, 1).data() * y.data()).sum();
  const double rhs = (xr.data() * up.data()).sum();
  CHECK(std::abs(lhs - rhs) < 1e-10);
}

TEST_CASE("deconv2d rejects kernels that cannot upsample exactly") {
  Graph g;
  Var x = g.constant(Tensor(Shape{1, 1, 2, 2}));
  Var b = g.constant(Tensor(Shape{1, 1, 1, 1}));
  CHECK_THROWS_AS(deconv2d(x, g.constant(Tensor(Shape{1, 1, 3, 3})), b, 2), ConfigError);
  CHECK_THROWS_AS(deconv2d(x, g.constant(Tensor(Shape{1, 1, 1, 1})), b, 2), ConfigError);
  CHECK_THROWS_AS(deconv2d(x, g.constant(Tensor(Shape{1, 1, 2, 2})), b, 0), ConfigError);
}

TEST_CASE("activations and elementwise ops") {
  Graph g;
  Var v = g.constant(Tensor(Shape{1, 1, 1, 3}, {-1, 0, 2}));
  CHECK((relu(v).value() == Eigen::Array3d(0, 0, 2)).all());
  CHECK(sigmoid(g.constant(Tensor(Shape{1, 1, 1, 1}, 0.0))).item() == 0.5);
  CHECK(lrelu(g.constant(Tensor(Shape{1, 1, 1, 1}, -5.0)), 0.2).item() == doctest::Approx(-1.0));
  Var big = g.constant(Tensor(Shape{1, 1, 1, 2}, {-40, 40}));
  CHECK((sigmoid(big).value() > 0.0).all());
  CHECK((tanh(big).value().abs() <= 1.0).all());

  std::mt19937_64 rng(4);
  Var x = g.constant(random_tensor({2, 3, 4, 5}, rng));
  Var zeros = g.constant(Tensor(x.shape()));
  Var ones = g.constant(Tensor(x.shape(), 1.0));
  CHECK((add(x, zeros).value() == x.value()).all());
  CHECK((mul(x, ones).value() == x.value()).all());
  Var p = mul(g.constant(Tensor(Shape{1, 1, 1, 2}, {2, 3})),
              g.constant(Tensor(Shape{1, 1, 1, 2}, {4, 5})));
  CHECK(p.value()[0] == 8.0);
  CHECK(p.value()[1] == 15.0);
  CHECK_THROWS_AS(add(x, g.constant(Tensor(Shape{1, 1, 1, 2}))), ConfigError);
  CHECK_THROWS_AS(mul(x, g.constant(Tensor(Shape{1, 1, 1, 2}))), ConfigError);
}

TEST_CASE("global_avg_pool") {
  Graph g;
  CHECK(global_avg_pool(g.constant(Tensor(Shape{1, 1, 3, 5}, 7.0))).item() == 7.0);
  CHECK(global_avg_pool(g.constant(Tensor(Shape{1, 1, 2, 2}, {1, 2, 3, 4}))).item() == 2.5);

  std::mt19937_64 rng(5);
  Tensor x = random_tensor({2, 512, 4, 4}, rng);
  Var pooled = global_avg_pool(g.constant(x));
  REQUIRE(pooled.shape() == Shape{2, 512, 1, 1});
  double worst = 0.0;
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 512; ++c) {
      double acc = 0.0;
      for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) acc += x.at(n, c, y, xx);
      worst = std::max(worst, std::abs(acc / 16.0 - pooled.value()[n * 512 + c]));
    }
  CHECK(worst < 1e-12);
}

TEST_CASE("backward: closed-form gradients and usage errors") {
  Tensor x(Shape{2, 3, 1, 1}, 0.3);
  x.requires_grad = true;
  {
    Graph g;
    g.backward(sum(g.param(x)));
  }
  CHECK((*x.grad == 1.0).all());

  Tensor three(Shape{1, 1, 1, 1}, 3.0);
  three.requires_grad = true;
  {
    Graph g;
    Var v = g.param(three);
    g.backward(sum(mul(v, v)));
  }
  CHECK((*three.grad)[0] == 6.0);

  // grads accumulate across sweeps until cleared
  {
    Graph g;
    Var v = g.param(three);
    g.backward(sum(mul(v, v)));
  }
  CHECK((*three.grad)[0] == 12.0);

  Graph g;
  Var c = sum(g.constant(Tensor(Shape{1, 1, 2, 2}, 1.0)));
  CHECK_THROWS_AS(g.backward(c), UsageError);
  CHECK_THROWS_AS(g.backward(Var{}), UsageError);
  Tensor p(Shape{1, 1, 2, 2}, 1.0);
  p.requires_grad = true;
  Var nonscalar = g.param(p);
  CHECK_THROWS_AS(g.backward(nonscalar), UsageError);
  Graph other;
  CHECK_THROWS_AS(other.backward(sum(nonscalar)), UsageError);
}

TEST_CASE("every op matches central finite differences") {
  std::mt19937_64 rng(6);
  using Builder = sgen::testing::LossBuilder;
  double worst = 0.0;
  int cases = 0;
  auto check = [&](const Builder& b, std::vector<Tensor> inputs) {
    auto r = gradient_check(b, inputs);
    worst = std::max(worst, r.max_rel_error);
    ++cases;
    CHECK(r.max_rel_error < 1e-4);
  };

  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + trial % 2, c = 1 + trial % 3, h = 4 + 2 * (trial % 3), w = 4 + 2 * (trial % 2);
    const Shape s{n, c, h, w};

    check([](Graph& g, auto& v) { return probe_loss(g, relu(v[0])); }, {random_tensor(s, rng)});
    check([](Graph& g, auto& v) { return probe_loss(g, lrelu(v[0], 0.2)); },
          {random_tensor(s, rng)});
    check([](Graph& g, auto& v) { return probe_loss(g, sigmoid(v[0])); },
          {random_tensor(s, rng, -3, 3)});
    check([](Graph& g, auto& v) { return probe_loss(g, tanh(v[0])); },
          {random_tensor(s, rng, -2, 2)});
    check([](Graph& g, auto& v) { return probe_loss(g, add(v[0], v[1])); },
          {random_tensor(s, rng), random_tensor(s, rng)});
    check([](Graph& g, auto& v) { return probe_loss(g, mul(v[0], v[1])); },
          {random_tensor(s, rng), random_tensor(s, rng)});
    check([](Graph& g, auto& v) { return probe_loss(g, maximum(v[0], v[1])); },
          {random_tensor(s, rng), random_tensor(s, rng)});
    check([](Graph& g, auto& v) { return probe_loss(g, affine(v[0], -1.5, 0.25)); },
          {random_tensor(s, rng)});
    check([](Graph& g, auto& v) { return probe_loss(g, concat_channels(v[0], v[1])); },
          {random_tensor(s, rng), random_tensor({n, c + 1, h, w}, rng)});
    check([](Graph& g, auto& v) { return probe_loss(g, global_avg_pool(v[0])); },
          {random_tensor(s, rng)});
    check([](Graph& g, auto& v) { return mean(mul(v[0], v[0])); }, {random_tensor(s, rng)});
    check([](Graph& g, auto& v) { return probe_loss(g, log_clamped(v[0])); },
          {random_tensor(s, rng, 0.2, 2.0)});
    check([](Graph&, auto& v) { return mse_loss(v[0], v[1]); },
          {random_tensor(s, rng), random_tensor(s, rng)});

    const int stride = 1 + trial % 2;
    check([stride](Graph& g, auto& v) { return probe_loss(g, conv2d(v[0], v[1], v[2], stride, 1)); },
          {random_tensor(s, rng), random_tensor({3, c, 3, 3}, rng), random_tensor({1, 3, 1, 1}, rng)});
    const int factor = 1 << (trial % 3);
    const int k = factor == 1 ? 3 : 2 * factor;
    check([factor](Graph& g, auto& v) { return probe_loss(g, deconv2d(v[0], v[1], v[2], factor)); },
          {random_tensor({n, c, 3, 2}, rng), random_tensor({c, 2, k, k}, rng),
           random_tensor({1, 2, 1, 1}, rng)});
  }
  MESSAGE("op gradient cases: " << cases << ", worst relative error " << worst);
}

TEST_CASE("backward accumulates over a diamond-shaped graph") {
  std::mt19937_64 rng(8);
  std::vector<Tensor> inputs{random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 2, 3, 3}, rng),
                             random_tensor({1, 2, 1, 1}, rng)};
  // x feeds four consumers: two branches, the product and the sum.
  auto build = [](Graph& g, std::vector<Var>& v) {
    Var left = tanh(conv2d(v[0], v[1], v[2], 1, 1));
    Var right = sigmoid(v[0]);
    return probe_loss(g, add(mul(left, right), add(v[0], left)));
  };
  auto r = gradient_check(build, inputs);
  CHECK(r.max_rel_error < 1e-4);

  Tensor x(Shape{1, 1, 1, 1}, 2.0);
  x.requires_grad = true;
  {
    Graph g;
    Var v = g.param(x);
    g.backward(sum(add(add(v, v), mul(v, v))));  // d/dx (2x + x^2) = 2 + 2x
  }
  CHECK((*x.grad)[0] == 6.0);
}

TEST_CASE("graph ops are deterministic") {
  std::mt19937_64 a(11), b(11);
  Tensor x1 = random_tensor({3, 4, 8, 8}, a), k1 = random_tensor({5, 4, 3, 3}, a);
  Tensor x2 = random_tensor({3, 4, 8, 8}, b), k2 = random_tensor({5, 4, 3, 3}, b);
  Tensor b0(Shape{1, 5, 1, 1});
  CHECK((run_conv(x1, k1, b0, 2, 1).data() == run_conv(x2, k2, b0, 2, 1).data()).all());
}

TEST_CASE("adam: zero gradient, first step and convergence") {
  ParamSet ps;
  Tensor w(Shape{1, 1, 1, 3}, {0.5, -1.0, 2.0});
  w.requires_grad = true;
  w.zero_grad();
  ps.emplace("w", w);
  AdamState st;
  adam_step(ps, st, 0.1);
  CHECK(st.step == 1);
  CHECK((ps.at("w").data() == w.data()).all());

  // After bias correction the first step is lr * g / (|g| + eps).
  ps.at("w").grad = Eigen::Array3d(0.3, -2.0, 1e-3);
  AdamState fresh;
  const Eigen::ArrayXd before = ps.at("w").data();
  adam_step(ps, fresh, 0.01);
  const Eigen::ArrayXd delta = ps.at("w").data() - before;
  CHECK(delta[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(delta[1] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(delta[2] == doctest::Approx(-0.01).epsilon(1e-4));

  ParamSet scalar;
  Tensor s(Shape{1, 1, 1, 1}, 1.0);
  s.requires_grad = true;
  scalar.emplace("w", s);
  AdamState run;
  for (int i = 0; i < 100; ++i) {
    Tensor& p = scalar.at("w");
    p.grad = Eigen::ArrayXd::Constant(1, 2.0 * p[0]);
    adam_step(scalar, run, 0.1);
  }
  CHECK(run.step == 100);
  CHECK(std::abs(scalar.at("w")[0]) < 0.5);
}

TEST_CASE("adam aborts on NaN gradients naming the parameter") {
  ParamSet ps;
  Tensor w(Shape{1, 1, 1, 1}, 1.0);
  w.requires_grad = true;
  w.grad = Eigen::ArrayXd::Constant(1, std::nan(""));
  ps.emplace("enc.trunk1.weight", w);
  AdamState st;
  try {
    adam_step(ps, st, 0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("enc.trunk1.weight") != std::string::npos);
  }
  CHECK(st.step == 0);
  CHECK(ps.at("enc.trunk1.weight")[0] == 1.0);
}
