#include "sgen/adam.hpp"

#include <cmath>

namespace sgen {

void adam_step(ParamSet& params, AdamState& state, double lr) {
  for (const auto& [path, p] : params) {
    if (p.grad && !p.grad->allFinite())
      throw NumericError("adam: non-finite gradient in parameter '" + path + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [path, p] : params) {
    if (!p.grad) continue;
    const Eigen::ArrayXd& g = *p.grad;
    if (g.size() != p.data().size())
      throw ConfigError("adam: gradient/parameter shape mismatch for '" + path + "'");
    auto [it, fresh] = state.moments.try_emplace(path);
    AdamMoments& mom = it->second;
    if (fresh) {
      mom.m = Eigen::ArrayXd::Zero(g.size());
      mom.v = Eigen::ArrayXd::Zero(g.size());
    }
    mom.m = state.beta1 * mom.m + (1.0 - state.beta1) * g;
    mom.v = state.beta2 * mom.v + (1.0 - state.beta2) * g.square();
    p.data() -= lr * (mom.m / c1) / ((mom.v / c2).sqrt() + state.epsilon);
  }
}

void zero_grads(ParamSet& params) {
  for (auto& [path, p] : params) {
    if (p.requires_grad) p.zero_grad();
  }
}

}  // namespace sgen
