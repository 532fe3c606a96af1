#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sgen/tensor.hpp"

namespace sgen {

/// Named parameter collection; ordered so that iteration is deterministic.
using ParamSet = std::map<std::string, Tensor>;

struct AdamMoments {
  Eigen::ArrayXd m;
  Eigen::ArrayXd v;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, AdamMoments> moments;
};

/// One bias-corrected Adam update over every parameter carrying a gradient.
/// Throws NumericError naming the parameter if any gradient is non-finite;
/// nothing is modified in that case.
void adam_step(ParamSet& params, AdamState& state, double lr);

/// Resets every gradient buffer in the set to zeros.
void zero_grads(ParamSet& params);

}  // namespace sgen
