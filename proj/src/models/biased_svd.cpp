#include <algorithm>
#include <limits>

#include "common.hpp"
#include "rectape/models/rating.hpp"

namespace rectape::models {

using namespace detail;

std::unique_ptr<BiasedSvd> BiasedSvd::create(std::size_t n_users, std::size_t n_items, std::size_t k,
                                             std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || k == 0) throw ValidationError("biasedsvd: n_users, n_items and k must be >= 1");
  auto m = std::make_unique<BiasedSvd>();
  Rng rng(seed);
  auto& p = m->params_;
  p.add("mu", Tensor::scalar(0.0), false);
  p.add("rating_range", Tensor::vector({std::numeric_limits<double>::lowest(), std::numeric_limits<double>::max()}),
        false);
  p.add("b_user", Tensor(Shape{n_users, 1}));
  p.add("b_item", Tensor(Shape{n_items, 1}));
  p.add("P", normal_tensor(Shape{n_users, k}, rng));
  p.add("Q", normal_tensor(Shape{n_items, k}, rng));
  return m;
}

void BiasedSvd::set_rating_stats(double mu, double lo, double hi) {
  params_.assign("mu", Tensor::scalar(mu));
  params_.assign("rating_range", Tensor::vector({lo, hi}));
}

double BiasedSvd::raw_score(Id user, Id item) const {
  check_ids(user, item);
  const auto pu = params_.at("P").row(user);
  const auto qi = params_.at("Q").row(item);
  double s = 0.0;
  for (std::size_t f = 0; f < pu.size(); ++f) s += pu[f] * qi[f];
  return params_.at("mu").item() + params_.at("b_user")[user] + params_.at("b_item")[item] + s;
}

double BiasedSvd::score(Id user, Id item) const {
  const auto& range = params_.at("rating_range");
  return std::clamp(raw_score(user, item), range[0], range[1]);
}

ad::Var BiasedSvd::batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<Id>& items,
                              const std::vector<double>& ratings, double l2) {
  const auto ui = to_indices(users), ii = to_indices(items);
  const Var pu = ad::embedding_lookup(bind["P"], ui);
  const Var qi = ad::embedding_lookup(bind["Q"], ii);
  const Var bu = ad::embedding_lookup(bind["b_user"], ui);
  const Var bi = ad::embedding_lookup(bind["b_item"], ii);
  const Var pred = ad::add(ad::add(ad::add(ad::dot(pu, qi), bu), bi), bind["mu"]);
  Var per_row = ad::square(ad::sub(pred, column(bind.tape(), ratings)));
  if (l2 != 0.0) {
    const Var reg = ad::add(ad::add(ad::square(bu), ad::square(bi)), ad::add(row_sq_norms(pu), row_sq_norms(qi)));
    per_row = ad::add(per_row, ad::scale(reg, l2));
  }
  return ad::mean(per_row);
}

namespace {

class SvdObjective : public Objective {
 public:
  SvdObjective(std::vector<data::Interaction> rows, double l2, std::size_t batch)
      : rows_(std::move(rows)), l2_(l2), batch_(batch) {}

  std::vector<LossBuilder> epoch(Rng& rng) override {
    std::vector<LossBuilder> out;
    for (const auto& idx : shuffled_batches(rows_.size(), batch_, rng)) {
      std::vector<Id> users, items;
      std::vector<double> ratings;
      for (auto k : idx) {
        users.push_back(rows_[k].user);
        items.push_back(rows_[k].item);
        ratings.push_back(rows_[k].rating);
      }
      out.push_back([users, items, ratings, l2 = l2_](Bindings& b) {
        return BiasedSvd::batch_loss(b, users, items, ratings, l2);
      });
    }
    return out;
  }

 private:
  std::vector<data::Interaction> rows_;
  double l2_;
  std::size_t batch_;
};

}  // namespace

std::unique_ptr<Objective> BiasedSvd::objective(const TrainData& data, const TrainOptions& options) {
  const auto& table = require_table(data, name());
  if (table.n_users() != n_users() || table.n_items() != n_items()) {
    throw Error("biasedsvd: training table does not match the model's id space");
  }
  double sum = 0.0, lo = table.interactions.front().rating, hi = lo;
  for (const auto& r : table.interactions) {
    sum += r.rating;
    lo = std::min(lo, r.rating);
    hi = std::max(hi, r.rating);
  }
  set_rating_stats(sum / static_cast<double>(table.interactions.size()), lo, hi);
  return std::make_unique<SvdObjective>(table.interactions, options.l2, options.batch_size);
}

}  // namespace rectape::models
