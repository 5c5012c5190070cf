#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rectape/param_store.hpp"

namespace rectape {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgd;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Number of applied steps.
  std::uint64_t t = 0;
  /// Adam moments keyed by parameter name; created on a parameter's first gradient.
  std::map<std::string, Tensor, std::less<>> first_moment;
  std::map<std::string, Tensor, std::less<>> second_moment;

  static OptimizerState sgd(double lr);
  static OptimizerState adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
};

/// p <- p - lr * g for every parameter present in `grads`.
void sgd_step(ParamStore& params, const GradMap& grads, OptimizerState& state);

/// Bias-corrected Adam. Increments t before computing the corrections.
void adam_step(ParamStore& params, const GradMap& grads, OptimizerState& state);

/// Dispatches on state.kind.
void optimizer_step(ParamStore& params, const GradMap& grads, OptimizerState& state);

}  // namespace rectape
