#include "common.hpp"
#include "rectape/models/ranking.hpp"

namespace rectape::models {

using namespace detail;

std::unique_ptr<BprMf> BprMf::create(std::size_t n_users, std::size_t n_items, std::size_t k, std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || k == 0) throw ValidationError("bprmf: n_users, n_items and k must be >= 1");
  auto m = std::make_unique<BprMf>();
  Rng rng(seed);
  m->params_.add("P", normal_tensor(Shape{n_users, k}, rng));
  m->params_.add("Q", normal_tensor(Shape{n_items, k}, rng));
  return m;
}

double BprMf::score(Id user, Id item) const {
  check_ids(user, item);
  const auto pu = params_.at("P").row(user);
  const auto qi = params_.at("Q").row(item);
  double s = 0.0;
  for (std::size_t f = 0; f < pu.size(); ++f) s += pu[f] * qi[f];
  return s;
}

ad::Var BprMf::bpr_loss(Var pu, Var qi, Var qj, double l2) {
  const Var x = ad::sub(ad::dot(pu, qi), ad::dot(pu, qj));
  Var per_row = ad::neg(ad::log_sigmoid(x));
  if (l2 != 0.0) {
    const Var reg = ad::add(ad::add(row_sq_norms(pu), row_sq_norms(qi)), row_sq_norms(qj));
    per_row = ad::add(per_row, ad::scale(reg, l2));
  }
  return ad::mean(per_row);
}

ad::Var BprMf::batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<Id>& pos,
                          const std::vector<Id>& neg, double l2) {
  const Var P = bind["P"], Q = bind["Q"];
  return bpr_loss(ad::embedding_lookup(P, to_indices(users)), ad::embedding_lookup(Q, to_indices(pos)),
                  ad::embedding_lookup(Q, to_indices(neg)), l2);
}

namespace {

class BprObjective : public Objective {
 public:
  BprObjective(Positives pos, double l2, std::size_t batch) : pos_(std::move(pos)), l2_(l2), batch_(batch) {}

  std::vector<LossBuilder> epoch(Rng& rng) override {
    const data::NegativeSampler sampler(*pos_.consumed);
    std::vector<LossBuilder> out;
    for (const auto& idx : shuffled_batches(pos_.pairs.size(), batch_, rng)) {
      std::vector<Id> users, items, negs;
      for (auto k : idx) {
        const auto [u, i] = pos_.pairs[k];
        users.push_back(u);
        items.push_back(i);
        negs.push_back(sampler.sample(u, rng));
      }
      out.push_back([users, items, negs, l2 = l2_](Bindings& b) { return BprMf::batch_loss(b, users, items, negs, l2); });
    }
    return out;
  }
  std::size_t skipped_users() const override { return pos_.full_users; }

 private:
  Positives pos_;
  double l2_;
  std::size_t batch_;
};

}  // namespace

std::unique_ptr<Objective> BprMf::objective(const TrainData& data, const TrainOptions& options) {
  const auto& table = require_table(data, name());
  if (table.n_users() != n_users() || table.n_items() != n_items()) {
    throw Error("bprmf: training table does not match the model's id space");
  }
  return std::make_unique<BprObjective>(collect_positives(table, name()), options.l2, options.batch_size);
}

}  // namespace rectape::models
