#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "sgen/tensor.hpp"

namespace sgen {

class Graph;

/// Handle to a node recorded on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph() const noexcept { return graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Shape& shape() const;
  const Eigen::ArrayXd& value() const;
  /// Gradient after Graph::backward; empty when no gradient reached the node.
  const Eigen::ArrayXd& grad() const;
  bool requires_grad() const;
  /// Copy of the current value as a standalone tensor (no graph attached).
  Tensor detach() const;
  /// Scalar value of a 1-element node.
  double item() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run tape. Nodes are appended in execution order, so every
/// node's inputs precede it and a reverse sweep is a valid topological order.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    const char* op = "";
    Shape shape;
    Eigen::ArrayXd value;
    Eigen::ArrayXd grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* sink = nullptr;  // parameter receiving the leaf gradient
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf holding a copy of t; never receives gradients.
  Var constant(const Tensor& t);
  Var constant(Shape shape, Eigen::ArrayXd value);
  /// Leaf bound to a parameter. When t.requires_grad, backward accumulates
  /// into t.grad.
  Var param(Tensor& t);

  /// Appends an op node. requires_grad is derived from the inputs.
  Var record(const char* op, Shape shape, Eigen::ArrayXd value,
             std::vector<std::size_t> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Parameter leaves accumulate (+=) into
  /// their tensor's grad buffer. May be called once per graph.
  void backward(const Var& loss);

  /// Adds g into the gradient of node id (no-op if it does not require grad).
  void accumulate(std::size_t id, const Eigen::ArrayXd& g);

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  Node& node(std::size_t id) { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  bool swept_ = false;
};

enum class Activation { relu, lrelu, sigmoid, tanh };

// Differentiable operations. All inputs must live on the same graph.

/// Convolution with a (out_c, in_c, k, k) kernel and out_c bias. Output
/// extent is floor((in + 2 pad - k) / stride) + 1.
Var conv2d(const Var& input, const Var& kernel, const Var& bias, int stride, int padding);

/// Transposed convolution upsampling by exactly `factor`. Kernel layout is
/// (in_c, out_c, k, k) with k >= factor and k - factor even; the implied
/// padding is (k - factor) / 2.
Var deconv2d(const Var& input, const Var& kernel, const Var& bias, int factor);

Var activation(Activation kind, const Var& input, double alpha = 0.2);
inline Var relu(const Var& x) { return activation(Activation::relu, x); }
inline Var lrelu(const Var& x, double alpha) { return activation(Activation::lrelu, x, alpha); }
inline Var sigmoid(const Var& x) { return activation(Activation::sigmoid, x); }
inline Var tanh(const Var& x) { return activation(Activation::tanh, x); }

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Elementwise max; ties route the gradient to `a`.
Var maximum(const Var& a, const Var& b);
/// scale * x + shift.
Var affine(const Var& x, double scale, double shift = 0.0);
/// Channel-wise concatenation of two tensors sharing n, h, w.
Var concat_channels(const Var& a, const Var& b);
/// Mean over each h x w plane; output (n, c, 1, 1).
Var global_avg_pool(const Var& x);
Var sum(const Var& x);
Var mean(const Var& x);
/// log(max(x, floor)); gradient is zero where the clamp is active.
Var log_clamped(const Var& x, double floor = 1e-12);
/// Mean of squared differences over all elements.
Var mse_loss(const Var& a, const Var& b);

}  // namespace sgen
