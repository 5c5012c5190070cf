#include "rectape/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "rectape/error.hpp"

namespace rectape {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double evaluate_loss(const ParamStore& params, const LossBuilder& build) {
  ad::Tape tape;
  Bindings bindings(tape, params);
  return build(bindings).value().item();
}

GradCheckReport grad_check(ParamStore& params, const LossBuilder& build, double tolerance,
                           double step) {
  GradMap analytic;
  {
    ad::Tape tape;
    Bindings bindings(tape, params);
    const ad::Var loss = build(bindings);
    if (!std::isfinite(loss.value().item())) throw Error("grad_check: loss is not finite");
    analytic = bindings.collect(tape.backward(loss));
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& entry : params.entries()) {
    if (!entry.trainable) continue;
    const auto it = analytic.find(entry.name);
    double worst = 0.0;
    for (std::size_t i = 0; i < entry.value.numel(); ++i) {
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      if (!std::isfinite(a)) {
        throw Error(fmt::format("grad_check: non-finite gradient for '{}'[{}]", entry.name, i));
      }
      const double original = entry.value[i];
      entry.value[i] = original + step;
      const double plus = evaluate_loss(params, build);
      entry.value[i] = original - step;
      const double minus = evaluate_loss(params, build);
      entry.value[i] = original;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw Error(fmt::format("grad_check: non-finite loss when perturbing '{}'[{}]", entry.name, i));
      }
      worst = std::max(worst, relative_error(a, (plus - minus) / (2.0 * step)));
    }
    report.max_rel_error[entry.name] = worst;
    report.max_error = std::max(report.max_error, worst);
  }
  return report;
}

}  // namespace rectape
