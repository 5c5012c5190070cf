#pragma once

// Finite-difference reference used by the tests. Deliberately independent of
// rectape::grad_check so the two can be compared.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rectape/rng.hpp"
#include "rectape/tensor.hpp"

namespace rectape::testing {

using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

inline std::vector<Tensor> central_differences(const ScalarFn& f, std::vector<Tensor> inputs,
                                               double h = 1e-6) {
  std::vector<Tensor> grads;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor g(inputs[t].shape(), 0.0);
    for (std::size_t i = 0; i < inputs[t].numel(); ++i) {
      const double x = inputs[t][i];
      inputs[t][i] = x + h;
      const double up = f(inputs);
      inputs[t][i] = x - h;
      const double down = f(inputs);
      inputs[t][i] = x;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

}  // namespace rectape::testing
