#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "common.hpp"
#include "rectape/models/rating.hpp"

namespace rectape::models {

using namespace detail;

std::unique_ptr<AutoRec> AutoRec::create(std::size_t n_users, std::size_t n_items, std::size_t hidden,
                                         std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || hidden == 0) {
    throw ValidationError("autorec: n_users, n_items and hidden size must be >= 1");
  }
  auto m = std::make_unique<AutoRec>();
  Rng rng(seed);
  auto& p = m->params_;
  set_hyper(p, "n_items", static_cast<double>(n_items));
  p.add("rating_range", Tensor::vector({std::numeric_limits<double>::lowest(), std::numeric_limits<double>::max()}),
        false);
  p.add("V", normal_tensor(Shape{hidden, n_users}, rng));
  p.add("mu_b", Tensor(Shape{hidden}));
  p.add("W", normal_tensor(Shape{n_users, hidden}, rng));
  p.add("b", Tensor(Shape{n_users}));
  m->refresh();
  return m;
}

void AutoRec::set_rating_range(double lo, double hi) { params_.assign("rating_range", Tensor::vector({lo, hi})); }

void AutoRec::set_observations(const data::InteractionTable& train) {
  Tensor obs(Shape{std::max<std::size_t>(1, train.interactions.size()), 3});
  for (std::size_t k = 0; k < train.interactions.size(); ++k) {
    const auto& r = train.interactions[k];
    obs.at(k, 0) = r.user;
    obs.at(k, 1) = r.item;
    obs.at(k, 2) = r.rating;
  }
  // An empty table stores one row with an out-of-range item, ignored on refresh.
  if (train.interactions.empty()) obs.at(0, 1) = static_cast<double>(n_items());
  params_.put_state("observed", std::move(obs));
}

std::vector<double> AutoRec::reconstruct(const std::vector<std::pair<Id, double>>& column) const {
  if (column.empty()) throw Error("autorec: cannot reconstruct an empty column");
  const auto& V = params_.at("V");
  const auto& W = params_.at("W");
  const auto& mu_b = params_.at("mu_b");
  const auto& b = params_.at("b");
  const std::size_t h = hidden();
  std::vector<double> code(h);
  for (std::size_t j = 0; j < h; ++j) {
    double z = mu_b[j];
    for (const auto& [u, r] : column) {
      if (u >= n_users()) throw Error(fmt::format("autorec: user {} out of range", u));
      z += V.at(j, u) * r;
    }
    code[j] = detail::sigmoid(z);
  }
  std::vector<double> out(n_users());
  for (std::size_t u = 0; u < out.size(); ++u) {
    double s = b[u];
    for (std::size_t j = 0; j < h; ++j) s += W.at(u, j) * code[j];
    out[u] = s;
  }
  return out;
}

void AutoRec::refresh() {
  n_items_ = static_cast<std::size_t>(hyper(params_, "n_items"));
  const auto& V = params_.at("V");
  const auto& mu_b = params_.at("mu_b");
  const std::size_t h = hidden();
  Tensor pre(Shape{n_items_, h});
  for (std::size_t i = 0; i < n_items_; ++i) {
    for (std::size_t j = 0; j < h; ++j) pre.at(i, j) = mu_b[j];
  }
  if (params_.contains("observed")) {
    const auto& obs = params_.at("observed");
    for (std::size_t k = 0; k < obs.rows(); ++k) {
      const auto u = static_cast<std::size_t>(obs.at(k, 0));
      const auto i = static_cast<std::size_t>(obs.at(k, 1));
      if (i >= n_items_) continue;
      for (std::size_t j = 0; j < h; ++j) pre.at(i, j) += V.at(j, u) * obs.at(k, 2);
    }
  }
  for (auto& v : pre.values()) v = detail::sigmoid(v);
  hidden_cache_ = std::move(pre);
}

double AutoRec::score(Id user, Id item) const {
  check_ids(user, item);
  const auto& W = params_.at("W");
  const auto code = hidden_cache_.row(item);
  double s = params_.at("b")[user];
  for (std::size_t j = 0; j < code.size(); ++j) s += W.at(user, j) * code[j];
  const auto& range = params_.at("rating_range");
  return std::clamp(s, range[0], range[1]);
}

ad::Var AutoRec::batch_loss(Bindings& bind, const Tensor& ratings, const Tensor& mask, double l2, double reg_scale) {
  ad::Tape& tape = bind.tape();
  const Var r = tape.constant(ratings);
  const Var m = tape.constant(mask);
  const Var V = bind["V"];
  const Var W = bind["W"];
  const Var code = ad::sigmoid(ad::add_row(ad::matmul(ad::mul(r, m), ad::transpose(V)), bind["mu_b"]));
  const Var out = ad::add_row(ad::matmul(code, ad::transpose(W)), bind["b"]);
  Var loss = ad::sum_squares(ad::mul(ad::sub(r, out), m));
  if (l2 != 0.0) {
    loss = ad::add(loss, ad::scale(ad::add(ad::sum_squares(W), ad::sum_squares(V)), 0.5 * l2 * reg_scale));
  }
  return loss;
}

namespace {

class AutoRecObjective : public Objective {
 public:
  AutoRecObjective(std::vector<std::vector<std::pair<Id, double>>> columns, std::size_t n_users, double l2,
                   std::size_t batch)
      : columns_(std::move(columns)), n_users_(n_users), l2_(l2), batch_(batch) {}

  std::vector<LossBuilder> epoch(Rng& rng) override {
    std::vector<LossBuilder> out;
    const double n = static_cast<double>(columns_.size());
    for (const auto& idx : shuffled_batches(columns_.size(), batch_, rng)) {
      Tensor ratings(Shape{idx.size(), n_users_});
      Tensor mask(Shape{idx.size(), n_users_});
      for (std::size_t row = 0; row < idx.size(); ++row) {
        for (const auto& [u, r] : columns_[idx[row]]) {
          ratings.at(row, u) = r;
          mask.at(row, u) = 1.0;
        }
      }
      // The regularizer is split across batches so an epoch sums to one copy.
      const double reg_scale = static_cast<double>(idx.size()) / n;
      out.push_back([ratings = std::move(ratings), mask = std::move(mask), l2 = l2_, reg_scale](Bindings& b) {
        return AutoRec::batch_loss(b, ratings, mask, l2, reg_scale);
      });
    }
    return out;
  }

 private:
  std::vector<std::vector<std::pair<Id, double>>> columns_;
  std::size_t n_users_;
  double l2_;
  std::size_t batch_;
};

}  // namespace

std::unique_ptr<Objective> AutoRec::objective(const TrainData& data, const TrainOptions& options) {
  const auto& table = require_table(data, name());
  if (table.n_users() != n_users() || table.n_items() != n_items()) {
    throw Error("autorec: training table does not match the model's id space");
  }
  std::vector<std::vector<std::pair<Id, double>>> by_item(n_items());
  double lo = table.interactions.front().rating, hi = lo;
  for (const auto& r : table.interactions) {
    by_item[r.item].emplace_back(r.user, r.rating);
    lo = std::min(lo, r.rating);
    hi = std::max(hi, r.rating);
  }
  std::vector<std::vector<std::pair<Id, double>>> columns;
  for (auto& c : by_item) {
    if (!c.empty()) columns.push_back(std::move(c));
  }
  set_rating_range(lo, hi);
  set_observations(table);
  return std::make_unique<AutoRecObjective>(std::move(columns), n_users(), options.l2, options.batch_size);
}

}  // namespace rectape::models
