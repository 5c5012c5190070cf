#include <fmt/format.h>

#include "common.hpp"
#include "rectape/models/sequential.hpp"

namespace rectape::models {

using namespace detail;

std::unique_ptr<Prme> Prme::create(std::size_t n_users, std::size_t n_items, std::size_t k, double alpha,
                                   std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || k == 0) throw ValidationError("prme: n_users, n_items and k must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError(fmt::format("prme: alpha={} must lie in [0, 1]", alpha));
  auto m = std::make_unique<Prme>();
  Rng rng(seed);
  auto& p = m->params_;
  set_hyper(p, "alpha", alpha);
  p.add("P_P", normal_tensor(Shape{n_items, k}, rng));
  p.add("P_S", normal_tensor(Shape{n_items, k}, rng));
  p.add("P_U", normal_tensor(Shape{n_users, k}, rng));
  m->init_sequential(n_users, n_items, 1);
  return m;
}

double Prme::alpha() const { return hyper(params_, "alpha"); }

double Prme::distance(Id user, Id prev, Id item) const {
  check_ids(user, item);
  if (prev > n_items()) throw Error(fmt::format("prme: previous item {} out of range", prev));
  const double a = alpha();
  const auto pu = params_.at("P_U").row(user);
  const auto pp = params_.at("P_P").row(item);
  double pref = 0.0;
  for (std::size_t f = 0; f < pu.size(); ++f) pref += (pu[f] - pp[f]) * (pu[f] - pp[f]);
  double seq = 0.0;
  if (prev < n_items()) {
    const auto sp = params_.at("P_S").row(prev);
    const auto si = params_.at("P_S").row(item);
    for (std::size_t f = 0; f < sp.size(); ++f) seq += (sp[f] - si[f]) * (sp[f] - si[f]);
  }
  return a * pref + (1.0 - a) * seq;
}

void Prme::score_next(Id user, std::span<const Id> window, std::span<const Id> items, std::span<double> out) const {
  check_window(window);
  for (std::size_t k = 0; k < items.size(); ++k) out[k] = -distance(user, window.back(), items[k]);
}

ad::Var Prme::batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<Id>& prev,
                         const std::vector<Id>& pos, const std::vector<Id>& neg, double alpha, double l2) {
  const auto pi = to_indices(pos), ni = to_indices(neg);
  Var d_pos, d_neg, reg;
  auto blend = [](Var acc, Var term) { return acc.valid() ? ad::add(acc, term) : term; };
  // Inactive branches are left off the tape so their tables get no update.
  if (alpha > 0.0) {
    const Var pu = ad::embedding_lookup(bind["P_U"], to_indices(users));
    const Var PP = bind["P_P"];
    const Var ppi = ad::embedding_lookup(PP, pi), ppj = ad::embedding_lookup(PP, ni);
    d_pos = blend(d_pos, ad::scale(ad::sq_l2_dist(pu, ppi), alpha));
    d_neg = blend(d_neg, ad::scale(ad::sq_l2_dist(pu, ppj), alpha));
    if (l2 != 0.0) {
      reg = blend(reg, ad::scale(ad::add(ad::add(row_sq_norms(pu), row_sq_norms(ppi)), row_sq_norms(ppj)), alpha));
    }
  }
  if (alpha < 1.0) {
    const Var PS = bind["P_S"];
    const Var sp = ad::embedding_lookup(PS, to_indices(prev));
    const Var si = ad::embedding_lookup(PS, pi), sj = ad::embedding_lookup(PS, ni);
    d_pos = blend(d_pos, ad::scale(ad::sq_l2_dist(sp, si), 1.0 - alpha));
    d_neg = blend(d_neg, ad::scale(ad::sq_l2_dist(sp, sj), 1.0 - alpha));
    if (l2 != 0.0) {
      reg = blend(reg,
                  ad::scale(ad::add(ad::add(row_sq_norms(sp), row_sq_norms(si)), row_sq_norms(sj)), 1.0 - alpha));
    }
  }
  Var per_row = ad::neg(ad::log_sigmoid(ad::sub(d_neg, d_pos)));
  if (reg.valid()) per_row = ad::add(per_row, ad::scale(reg, l2));
  return ad::mean(per_row);
}

namespace {

class PrmeObjective : public Objective {
 public:
  PrmeObjective(data::SequenceDataset seqs, std::shared_ptr<data::UserItems> consumed, double alpha, double l2,
                std::size_t batch)
      : seqs_(std::move(seqs)), consumed_(std::move(consumed)), alpha_(alpha), l2_(l2), batch_(batch) {
    for (const auto& inst : seqs_.instances) {
      if (consumed_->items(inst.user).size() < seqs_.n_items) usable_.push_back(&inst);
    }
    if (usable_.empty()) throw Error("prme: no training transitions");
  }

  std::vector<LossBuilder> epoch(Rng& rng) override {
    const data::NegativeSampler sampler(*consumed_);
    std::vector<LossBuilder> out;
    for (const auto& idx : shuffled_batches(usable_.size(), batch_, rng)) {
      std::vector<Id> users, prev, pos, neg;
      for (auto k : idx) {
        const auto& inst = *usable_[k];
        users.push_back(inst.user);
        prev.push_back(inst.window.back());
        pos.push_back(inst.targets.front());
        neg.push_back(sampler.sample(inst.user, rng));
      }
      out.push_back([users, prev, pos, neg, a = alpha_, l2 = l2_](Bindings& b) {
        return Prme::batch_loss(b, users, prev, pos, neg, a, l2);
      });
    }
    return out;
  }

 private:
  data::SequenceDataset seqs_;
  std::shared_ptr<data::UserItems> consumed_;
  std::vector<const data::SequenceInstance*> usable_;
  double alpha_, l2_;
  std::size_t batch_;
};

}  // namespace

std::unique_ptr<Objective> Prme::objective(const TrainData& data, const TrainOptions& options) {
  const auto& table = require_table(data, name());
  if (table.n_users() != n_users() || table.n_items() != n_items()) {
    throw Error("prme: training table does not match the model's id space");
  }
  auto seqs = data::build_sequences(table, 1, 1);
  store_context(seqs);
  return std::make_unique<PrmeObjective>(std::move(seqs), std::make_shared<data::UserItems>(table), alpha(),
                                         options.l2, options.batch_size);
}

}  // namespace rectape::models
