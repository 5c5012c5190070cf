#include <fmt/format.h>

#include "common.hpp"
#include "rectape/models/ranking.hpp"

namespace rectape::models {

using namespace detail;

std::unique_ptr<Cdae> Cdae::create(std::size_t n_users, std::size_t n_items, std::size_t hidden, double q,
                                   std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || hidden == 0) {
    throw ValidationError("cdae: n_users, n_items and hidden size must be >= 1");
  }
  if (!(q >= 0.0 && q < 1.0)) throw ValidationError(fmt::format("cdae: corruption q={} must lie in [0, 1)", q));
  auto m = std::make_unique<Cdae>();
  Rng rng(seed);
  auto& p = m->params_;
  set_hyper(p, "q", q);
  p.add("W", normal_tensor(Shape{n_items, hidden}, rng));
  p.add("V_u", normal_tensor(Shape{n_users, hidden}, rng));
  p.add("b", Tensor(Shape{hidden}));
  p.add("W_out", normal_tensor(Shape{hidden, n_items}, rng));
  p.add("b_out", Tensor(Shape{n_items}));
  m->refresh();
  return m;
}

double Cdae::corruption() const { return hyper(params_, "q"); }

void Cdae::set_observations(const data::InteractionTable& train) {
  Tensor obs(Shape{std::max<std::size_t>(1, train.interactions.size()), 2});
  for (std::size_t k = 0; k < train.interactions.size(); ++k) {
    obs.at(k, 0) = train.interactions[k].user;
    obs.at(k, 1) = train.interactions[k].item;
  }
  if (train.interactions.empty()) obs.at(0, 0) = static_cast<double>(n_users());
  params_.put_state("observed", std::move(obs));
}

std::vector<double> Cdae::forward(Id user, std::span<const double> y) const {
  if (y.size() != n_items()) {
    throw Error(fmt::format("cdae: preference vector has {} entries, expected {}", y.size(), n_items()));
  }
  check_ids(user, 0);
  const auto& W = params_.at("W");
  const auto& Wo = params_.at("W_out");
  const auto& bo = params_.at("b_out");
  const auto vu = params_.at("V_u").row(user);
  const auto& b = params_.at("b");
  const std::size_t h = vu.size();
  std::vector<double> z(h);
  for (std::size_t j = 0; j < h; ++j) {
    double s = vu[j] + b[j];
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] != 0.0) s += W.at(i, j) * y[i];
    }
    z[j] = detail::sigmoid(s);
  }
  std::vector<double> out(n_items());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = bo[i];
    for (std::size_t j = 0; j < h; ++j) s += z[j] * Wo.at(j, i);
    out[i] = detail::sigmoid(s);
  }
  return out;
}

void Cdae::refresh() {
  const auto& W = params_.at("W");
  const auto& V = params_.at("V_u");
  const auto& b = params_.at("b");
  Tensor pre(V.shape());
  for (std::size_t u = 0; u < V.rows(); ++u) {
    for (std::size_t j = 0; j < V.cols(); ++j) pre.at(u, j) = V.at(u, j) + b[j];
  }
  if (params_.contains("observed")) {
    const auto& obs = params_.at("observed");
    for (std::size_t k = 0; k < obs.rows(); ++k) {
      const auto u = static_cast<std::size_t>(obs.at(k, 0));
      const auto i = static_cast<std::size_t>(obs.at(k, 1));
      if (u >= V.rows()) continue;
      for (std::size_t j = 0; j < V.cols(); ++j) pre.at(u, j) += W.at(i, j);
    }
  }
  for (auto& v : pre.values()) v = detail::sigmoid(v);
  code_cache_ = std::move(pre);
}

double Cdae::score(Id user, Id item) const {
  check_ids(user, item);
  const auto& Wo = params_.at("W_out");
  const auto z = code_cache_.row(user);
  double s = params_.at("b_out")[item];
  for (std::size_t j = 0; j < z.size(); ++j) s += z[j] * Wo.at(j, item);
  return detail::sigmoid(s);
}

ad::Var Cdae::batch_loss(Bindings& bind, const std::vector<Id>& users, const Tensor& targets, const Tensor& weights,
                         double q, std::uint64_t corruption_seed, double l2, double reg_scale) {
  ad::Tape& tape = bind.tape();
  Rng rng(corruption_seed);
  const Var y = tape.constant(targets);
  const Var corrupted = ad::dropout(y, 1.0 - q, rng, true);
  const Var W = bind["W"], Wo = bind["W_out"];
  const Var vu = ad::embedding_lookup(bind["V_u"], to_indices(users));
  const Var z = ad::sigmoid(ad::add_row(ad::add(ad::matmul(corrupted, W), vu), bind["b"]));
  const Var logits = ad::add_row(ad::matmul(z, Wo), bind["b_out"]);
  const double inv_b = 1.0 / static_cast<double>(users.size());
  Var loss = ad::scale(ad::sum(ad::mul(tape.constant(weights), bce_with_logits(logits, y))), inv_b);
  if (l2 != 0.0) {
    const Var reg = ad::add(ad::scale(ad::sum_squares(vu), inv_b),
                            ad::scale(ad::add(ad::sum_squares(W), ad::sum_squares(Wo)), reg_scale));
    loss = ad::add(loss, ad::scale(reg, l2));
  }
  return loss;
}

namespace {

class CdaeObjective : public Objective {
 public:
  CdaeObjective(Positives pos, std::size_t n_users, std::size_t n_items, double q, double l2, std::size_t batch,
                std::size_t negs)
      : pos_(std::move(pos)), n_items_(n_items), q_(q), l2_(l2), batch_(batch), negs_(negs) {
    std::vector<char> active(n_users, 0);
    for (const auto& [u, i] : pos_.pairs) active[u] = 1;
    for (Id u = 0; u < n_users; ++u) {
      if (active[u]) users_.push_back(u);
    }
  }

  std::vector<LossBuilder> epoch(Rng& rng) override {
    const data::NegativeSampler sampler(*pos_.consumed);
    std::vector<LossBuilder> out;
    const double n = static_cast<double>(users_.size());
    for (const auto& idx : shuffled_batches(users_.size(), batch_, rng)) {
      std::vector<Id> users;
      Tensor targets(Shape{idx.size(), n_items_});
      Tensor weights(Shape{idx.size(), n_items_});
      for (std::size_t row = 0; row < idx.size(); ++row) {
        const Id u = users_[idx[row]];
        users.push_back(u);
        const auto& items = pos_.consumed->items(u);
        for (Id i : items) {
          targets.at(row, i) = 1.0;
          weights.at(row, i) = 1.0;
        }
        for (std::size_t s = 0; s < negs_ * items.size(); ++s) weights.at(row, sampler.sample(u, rng)) += 1.0;
      }
      const std::uint64_t seed = rng.next_u64();
      const double reg_scale = static_cast<double>(idx.size()) / n;
      out.push_back([users = std::move(users), targets = std::move(targets), weights = std::move(weights), q = q_,
                     seed, l2 = l2_, reg_scale](Bindings& b) {
        return Cdae::batch_loss(b, users, targets, weights, q, seed, l2, reg_scale);
      });
    }
    return out;
  }
  std::size_t skipped_users() const override { return pos_.full_users; }

 private:
  Positives pos_;
  std::vector<Id> users_;
  std::size_t n_items_;
  double q_, l2_;
  std::size_t batch_, negs_;
};

}  // namespace

std::unique_ptr<Objective> Cdae::objective(const TrainData& data, const TrainOptions& options) {
  const auto& table = require_table(data, name());
  if (table.n_users() != n_users() || table.n_items() != n_items()) {
    throw Error("cdae: training table does not match the model's id space");
  }
  set_observations(table);
  return std::make_unique<CdaeObjective>(collect_positives(table, name()), n_users(), n_items(), corruption(),
                                         options.l2, options.batch_size, options.neg_samples);
}

}  // namespace rectape::models
