#pragma once

#include <functional>
#include <map>
#include <string>

#include "rectape/param_store.hpp"

namespace rectape {

/// Builds a scalar loss from bound parameters. Must be deterministic: it is
/// evaluated once for the analytic gradient and twice per perturbed element.
using LossBuilder = std::function<ad::Var(Bindings&)>;

struct GradCheckReport {
  /// Worst relative error per trainable parameter.
  std::map<std::string, double> max_rel_error;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_error < tolerance; }
};

/// Relative error |a - b| / max(1, |a|, |b|).
double relative_error(double a, double b);

/// Evaluates the loss without differentiating.
double evaluate_loss(const ParamStore& params, const LossBuilder& build);

/// Compares reverse-mode gradients against central finite differences.
/// Throws rectape::Error naming the parameter if a loss or gradient is not finite.
GradCheckReport grad_check(ParamStore& params, const LossBuilder& build, double tolerance,
                           double step = 1e-6);

}  // namespace rectape
