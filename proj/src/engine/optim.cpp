#include "rectape/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "rectape/error.hpp"

namespace rectape {

OptimizerState OptimizerState::sgd(double lr) {
  OptimizerState s;
  s.kind = OptimizerKind::kSgd;
  s.lr = lr;
  return s;
}

OptimizerState OptimizerState::adam(double lr, double beta1, double beta2, double epsilon) {
  OptimizerState s;
  s.kind = OptimizerKind::kAdam;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

namespace {

Tensor& checked_param(ParamStore& params, const std::string& name, const Tensor& grad,
                      std::string_view op) {
  Tensor& p = params.at(name);
  if (!params.entry(name).trainable) throw Error(fmt::format("{}: '{}' is not trainable", op, name));
  if (p.shape() != grad.shape()) {
    throw ShapeError(fmt::format("{} '{}'", op, name), shape_string(p.shape()), shape_string(grad.shape()));
  }
  return p;
}

}  // namespace

void sgd_step(ParamStore& params, const GradMap& grads, OptimizerState& state) {
  if (state.kind != OptimizerKind::kSgd) throw Error("sgd_step: optimizer state is not sgd");
  for (const auto& [name, g] : grads) {
    Tensor& p = checked_param(params, name, g, "sgd_step");
    for (std::size_t i = 0; i < p.numel(); ++i) p[i] -= state.lr * g[i];
  }
  ++state.t;
}

void adam_step(ParamStore& params, const GradMap& grads, OptimizerState& state) {
  if (state.kind != OptimizerKind::kAdam) throw Error("adam_step: optimizer state is not adam");
  for (const auto& [name, g] : grads) checked_param(params, name, g, "adam_step");

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto m_it = state.first_moment.try_emplace(name, g.shape(), 0.0).first;
    auto v_it = state.second_moment.try_emplace(name, g.shape(), 0.0).first;
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void optimizer_step(ParamStore& params, const GradMap& grads, OptimizerState& state) {
  if (state.kind == OptimizerKind::kAdam) {
    adam_step(params, grads, state);
  } else {
    sgd_step(params, grads, state);
  }
}

}  // namespace rectape
