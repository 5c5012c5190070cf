#include <fmt/format.h>

#include "common.hpp"
#include "rectape/models/sequential.hpp"

namespace rectape::models {

using namespace detail;

namespace {

std::string filter_name(std::size_t h) { return fmt::format("F{}", h); }
std::string filter_bias_name(std::size_t h) { return fmt::format("Fb{}", h); }

}  // namespace

std::unique_ptr<Caser> Caser::create(std::size_t n_users, std::size_t n_items, std::size_t d, std::size_t L,
                                     std::size_t T, std::size_t n_h, std::size_t n_v, std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || d == 0 || L == 0 || T == 0 || n_h == 0 || n_v == 0) {
    throw ValidationError("caser: n_users, n_items, d, L, T, n_h and n_v must all be >= 1");
  }
  auto m = std::make_unique<Caser>();
  Rng rng(seed);
  auto& p = m->params_;
  set_hyper(p, "T", static_cast<double>(T));
  Tensor E = normal_tensor(Shape{n_items + 1, d}, rng);
  zero_row(E, n_items);
  p.add("E", std::move(E));
  for (std::size_t h = 1; h <= L; ++h) {
    p.add(filter_name(h), normal_tensor(Shape{n_h, h * d}, rng));
    p.add(filter_bias_name(h), Tensor(Shape{n_h}));
  }
  p.add("W_v", normal_tensor(Shape{n_v, L}, rng));
  p.add("W_fc", normal_tensor(Shape{n_h * L + n_v * d, d}, rng));
  p.add("b_fc", Tensor(Shape{d}));
  p.add("P", normal_tensor(Shape{n_users, d}, rng));
  p.add("W_out", normal_tensor(Shape{n_items, 2 * d}, rng));
  p.add("b_out", Tensor(Shape{n_items, 1}));
  m->init_sequential(n_users, n_items, L);
  return m;
}

ad::Var Caser::user_vector(Bindings& bind, Id user, std::span<const Id> window) {
  const Var E = bind["E"];
  const std::size_t L = window.size();
  const std::size_t d = E.shape()[1];
  const Var ew = ad::embedding_lookup(E, std::vector<std::uint32_t>(window.begin(), window.end()));
  std::vector<Var> parts;
  for (std::size_t h = 1; h <= L; ++h) {
    const Var conv = ad::add_row(ad::conv_h(ew, bind[filter_name(h)], h), bind[filter_bias_name(h)]);
    parts.push_back(ad::max_over_time(ad::relu(conv)));
  }
  const Var wv = bind["W_v"];
  const std::size_t n_v = wv.shape()[0];
  parts.push_back(ad::reshape(ad::matmul(wv, ew), Shape{1, n_v * d}));
  const Var z = ad::relu(ad::add_row(ad::matmul(ad::concat(parts, 1), bind["W_fc"]), bind["b_fc"]));
  return ad::concat({z, ad::embedding_lookup(bind["P"], {user})}, 1);
}

ad::Var Caser::logits(Bindings& bind, Var user_vec, const std::vector<Id>& candidates) {
  const auto idx = to_indices(candidates);
  const Var w = ad::embedding_lookup(bind["W_out"], idx);
  return ad::add(ad::matmul(w, ad::transpose(user_vec)), ad::embedding_lookup(bind["b_out"], idx));
}

std::vector<double> Caser::forward(Id user, std::span<const Id> window) const {
  check_ids(user, 0);
  check_window(window);
  ad::Tape tape;
  Bindings bind(tape, params_);
  const Tensor x = user_vector(bind, user, window).value();
  const auto& W = params_.at("W_out");
  const auto& b = params_.at("b_out");
  std::vector<double> out(n_items());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = b[i];
    const auto w = W.row(i);
    for (std::size_t f = 0; f < w.size(); ++f) s += w[f] * x[f];
    out[i] = s;
  }
  return out;
}

void Caser::score_next(Id user, std::span<const Id> window, std::span<const Id> items, std::span<double> out) const {
  const auto all = forward(user, window);
  for (std::size_t k = 0; k < items.size(); ++k) {
    check_ids(user, items[k]);
    out[k] = all[items[k]];
  }
}

void Caser::after_update() { zero_row(params_.at("E"), n_items()); }

ad::Var Caser::batch_loss(Bindings& bind, const std::vector<Instance>& batch, double l2) {
  ad::Tape& tape = bind.tape();
  Var total;
  for (const auto& inst : batch) {
    const Var x = user_vector(bind, inst.user, inst.window);
    std::vector<Id> cands = inst.targets;
    cands.insert(cands.end(), inst.negatives.begin(), inst.negatives.end());
    std::vector<double> labels(cands.size(), 0.0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(inst.targets.size()), 1.0);
    Var loss = ad::sum(bce_with_logits(logits(bind, x, cands), column(tape, labels)));
    if (l2 != 0.0) {
      const Var reg = ad::add(ad::sum_squares(ad::embedding_lookup(bind["P"], {inst.user})),
                              ad::sum_squares(ad::embedding_lookup(bind["W_out"], to_indices(cands))));
      loss = ad::add(loss, ad::scale(reg, l2));
    }
    total = total.valid() ? ad::add(total, loss) : loss;
  }
  return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
}

namespace {

class CaserObjective : public Objective {
 public:
  CaserObjective(data::SequenceDataset seqs, std::shared_ptr<data::UserItems> consumed, double l2,
                 std::size_t batch, std::size_t negs)
      : seqs_(std::move(seqs)), consumed_(std::move(consumed)), l2_(l2), batch_(batch), negs_(negs) {
    for (const auto& inst : seqs_.instances) {
      if (consumed_->items(inst.user).size() < seqs_.n_items) usable_.push_back(&inst);
    }
    if (usable_.empty()) throw Error("caser: no training instances");
  }

  std::vector<LossBuilder> epoch(Rng& rng) override {
    const data::NegativeSampler sampler(*consumed_);
    std::vector<LossBuilder> out;
    for (const auto& idx : shuffled_batches(usable_.size(), batch_, rng)) {
      std::vector<Caser::Instance> batch;
      for (auto k : idx) {
        const auto& src = *usable_[k];
        Caser::Instance inst{src.user, src.window, src.targets, {}};
        for (std::size_t s = 0; s < negs_ * src.targets.size(); ++s) inst.negatives.push_back(sampler.sample(src.user, rng));
        batch.push_back(std::move(inst));
      }
      out.push_back([batch = std::move(batch), l2 = l2_](Bindings& b) { return Caser::batch_loss(b, batch, l2); });
    }
    return out;
  }

 private:
  data::SequenceDataset seqs_;
  std::shared_ptr<data::UserItems> consumed_;
  std::vector<const data::SequenceInstance*> usable_;
  double l2_;
  std::size_t batch_, negs_;
};

}  // namespace

std::unique_ptr<Objective> Caser::objective(const TrainData& data, const TrainOptions& options) {
  const auto& table = require_table(data, name());
  if (table.n_users() != n_users() || table.n_items() != n_items()) {
    throw Error("caser: training table does not match the model's id space");
  }
  const auto T = static_cast<std::size_t>(hyper(params_, "T"));
  auto seqs = data::build_sequences(table, window(), T);
  store_context(seqs);
  return std::make_unique<CaserObjective>(std::move(seqs), std::make_shared<data::UserItems>(table), options.l2,
                                          options.batch_size, options.neg_samples);
}

}  // namespace rectape::models
