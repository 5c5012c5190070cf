#include "common.hpp"
#include "rectape/models/ranking.hpp"

namespace rectape::models {

using namespace detail;

std::unique_ptr<Cml> Cml::create(std::size_t n_users, std::size_t n_items, std::size_t k, double margin,
                                 std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || k == 0) throw ValidationError("cml: n_users, n_items and k must be >= 1");
  if (!(margin >= 0.0)) throw ValidationError("cml: margin must be >= 0");
  auto m = std::make_unique<Cml>();
  Rng rng(seed);
  set_hyper(m->params_, "margin", margin);
  m->params_.add("U", normal_tensor(Shape{n_users, k}, rng));
  m->params_.add("V", normal_tensor(Shape{n_items, k}, rng));
  return m;
}

double Cml::margin() const { return hyper(params_, "margin"); }

double Cml::score(Id user, Id item) const {
  check_ids(user, item);
  const auto u = params_.at("U").row(user);
  const auto v = params_.at("V").row(item);
  double d = 0.0;
  for (std::size_t f = 0; f < u.size(); ++f) d += (u[f] - v[f]) * (u[f] - v[f]);
  return -d;
}

void Cml::after_update() {
  clip_rows(params_.at("U"), 1.0);
  clip_rows(params_.at("V"), 1.0);
}

ad::Var Cml::hinge_loss(Var u, Var vi, std::span<const Var> vj, double margin) {
  const Var d_pos = ad::sq_l2_dist(u, vi);
  Var total;
  for (const Var& v : vj) {
    const Var h = ad::relu(ad::add(ad::sub(d_pos, ad::sq_l2_dist(u, v)), u.tape()->constant(Tensor::scalar(margin))));
    total = total.valid() ? ad::add(total, h) : h;
  }
  if (!total.valid()) throw Error("cml: at least one negative per positive is required");
  return ad::mean(total);
}

ad::Var Cml::batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<Id>& pos,
                        const std::vector<std::vector<Id>>& neg, double margin, double l2) {
  const Var U = bind["U"], V = bind["V"];
  const Var u = ad::embedding_lookup(U, to_indices(users));
  const Var vi = ad::embedding_lookup(V, to_indices(pos));
  std::vector<Var> vj;
  for (const auto& slot : neg) vj.push_back(ad::embedding_lookup(V, to_indices(slot)));
  Var loss = hinge_loss(u, vi, vj, margin);
  if (l2 != 0.0) {
    Var reg = ad::add(row_sq_norms(u), row_sq_norms(vi));
    for (const Var& v : vj) reg = ad::add(reg, row_sq_norms(v));
    loss = ad::add(loss, ad::scale(ad::mean(reg), l2));
  }
  return loss;
}

namespace {

class CmlObjective : public Objective {
 public:
  CmlObjective(Positives pos, double margin, double l2, std::size_t batch, std::size_t negs)
      : pos_(std::move(pos)), margin_(margin), l2_(l2), batch_(batch), negs_(negs) {}

  std::vector<LossBuilder> epoch(Rng& rng) override {
    const data::NegativeSampler sampler(*pos_.consumed);
    std::vector<LossBuilder> out;
    for (const auto& idx : shuffled_batches(pos_.pairs.size(), batch_, rng)) {
      std::vector<Id> users, items;
      std::vector<std::vector<Id>> neg(negs_);
      for (auto k : idx) {
        const auto [u, i] = pos_.pairs[k];
        users.push_back(u);
        items.push_back(i);
        for (auto& slot : neg) slot.push_back(sampler.sample(u, rng));
      }
      out.push_back([users, items, neg, m = margin_, l2 = l2_](Bindings& b) {
        return Cml::batch_loss(b, users, items, neg, m, l2);
      });
    }
    return out;
  }
  std::size_t skipped_users() const override { return pos_.full_users; }

 private:
  Positives pos_;
  double margin_, l2_;
  std::size_t batch_, negs_;
};

}  // namespace

std::unique_ptr<Objective> Cml::objective(const TrainData& data, const TrainOptions& options) {
  const auto& table = require_table(data, name());
  if (table.n_users() != n_users() || table.n_items() != n_items()) {
    throw Error("cml: training table does not match the model's id space");
  }
  if (options.neg_samples == 0) throw ValidationError("cml: neg_samples must be >= 1");
  return std::make_unique<CmlObjective>(collect_positives(table, name()), margin(), options.l2, options.batch_size,
                                        options.neg_samples);
}

}  // namespace rectape::models
