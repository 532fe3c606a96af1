#include "sgen/graph.hpp"

namespace sgen {

const Shape& Var::shape() const { return graph_->node(id_).shape; }
const Eigen::ArrayXd& Var::value() const { return graph_->node(id_).value; }
const Eigen::ArrayXd& Var::grad() const { return graph_->node(id_).grad; }
bool Var::requires_grad() const { return graph_->node(id_).requires_grad; }

Tensor Var::detach() const {
  const auto& n = graph_->node(id_);
  return Tensor(n.shape, n.value);
}

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1)
    throw UsageError("item() on a tensor of shape " + shape().str());
  return v[0];
}

Var Graph::constant(const Tensor& t) { return constant(t.shape(), t.data()); }

Var Graph::constant(Shape shape, Eigen::ArrayXd value) {
  if (static_cast<std::size_t>(value.size()) != shape.numel())
    throw ConfigError("constant data length does not match shape " + shape.str());
  Node n;
  n.op = "constant";
  n.shape = shape;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::param(Tensor& t) {
  Node n;
  n.op = "param";
  n.shape = t.shape();
  n.value = t.data();
  n.requires_grad = t.requires_grad;
  n.sink = t.requires_grad ? &t : nullptr;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::record(const char* op, Shape shape, Eigen::ArrayXd value,
                  std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw UsageError(std::string(op) + ": input from another graph");
    needs = needs || nodes_[id].requires_grad;
  }
  Node n;
  n.op = op;
  n.shape = shape;
  n.value = std::move(value);
  n.requires_grad = needs;
  n.inputs = std::move(inputs);
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Graph::accumulate(std::size_t id, const Eigen::ArrayXd& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Graph::backward(const Var& loss) {
  if (loss.graph() != this || loss.id() >= nodes_.size())
    throw UsageError("backward: loss is not recorded on this graph");
  Node& root = nodes_[loss.id()];
  if (root.shape.numel() != 1)
    throw UsageError("backward: loss must be scalar, got shape " + root.shape.str());
  if (!root.requires_grad)
    throw UsageError("backward: loss does not depend on any parameter (detached graph)");
  if (swept_) throw UsageError("backward: graph was already swept");
  swept_ = true;

  root.grad = Eigen::ArrayXd::Ones(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.sink) {
      Tensor& p = *n.sink;
      if (!p.grad || p.grad->size() != n.grad.size())
        p.grad = n.grad;
      else
        *p.grad += n.grad;
    }
  }
}

}  // namespace sgen
