#pragma once

#include <cmath>
#include <memory>
#include <string_view>
#include <vector>

#include "rectape/autodiff.hpp"
#include "rectape/data.hpp"
#include "rectape/error.hpp"
#include "rectape/models/model.hpp"
#include "rectape/param_store.hpp"
#include "rectape/rng.hpp"

namespace rectape::models::detail {

using ad::Var;

inline constexpr double kInitStddev = 0.01;

inline Tensor normal_tensor(Shape shape, Rng& rng, double stddev = kInitStddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

/// Scalar hyperparameters live in the parameter store so a checkpoint alone
/// is enough to rebuild the scorer.
inline void set_hyper(ParamStore& p, std::string_view name, double value) {
  p.put_state("hyper." + std::string(name), Tensor::scalar(value));
}

inline double hyper(const ParamStore& p, std::string_view name) {
  return p.at("hyper." + std::string(name)).item();
}

inline Var column(ad::Tape& tape, std::vector<double> values) {
  const std::size_t n = values.size();
  return tape.constant(Tensor(Shape{n, 1}, std::move(values)));
}

/// Row-wise squared norms: [n x k] -> [n x 1].
inline Var row_sq_norms(Var x) { return ad::sum(ad::square(x), 1); }

/// Elementwise binary cross-entropy on logits with 0/1 labels of equal shape.
inline Var bce_with_logits(Var logits, Var labels) {
  ad::Tape& tape = *logits.tape();
  const Var ones = tape.constant(Tensor(logits.shape(), 1.0));
  const Var pos = ad::mul(labels, ad::log_sigmoid(logits));
  const Var neg = ad::mul(ad::sub(ones, labels), ad::log_sigmoid(ad::neg(logits)));
  return ad::neg(ad::add(pos, neg));
}

inline std::vector<std::uint32_t> to_indices(const std::vector<Id>& ids) {
  return std::vector<std::uint32_t>(ids.begin(), ids.end());
}

/// Shuffled index batches covering [0, n).
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng);

/// Rescales rows with norm above `radius` onto the ball. `skip_row` is left
/// untouched (pass SIZE_MAX for none).
void clip_rows(Tensor& table, double radius, std::size_t skip_row = SIZE_MAX);

inline void zero_row(Tensor& table, std::size_t row) {
  for (auto& v : table.row(row)) v = 0.0;
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Positive (user, item) pairs with per-user item sets.
struct Positives {
  std::vector<std::pair<Id, Id>> pairs;
  std::shared_ptr<data::UserItems> consumed;
  std::size_t full_users = 0;
};

/// Collects pairs, dropping users who consumed every item (counted and logged).
Positives collect_positives(const data::InteractionTable& table, std::string_view model);

const data::InteractionTable& require_table(const TrainData& data, std::string_view model);

}  // namespace rectape::models::detail
