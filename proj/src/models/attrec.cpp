#include <cmath>

#include <fmt/format.h>

#include "common.hpp"
#include "rectape/models/sequential.hpp"

namespace rectape::models {

using namespace detail;

std::unique_ptr<AttRec> AttRec::create(std::size_t n_users, std::size_t n_items, std::size_t d, std::size_t L,
                                       double omega, double margin, double rho, std::uint64_t seed) {
  if (n_users == 0 || n_items == 0 || d == 0 || L == 0) {
    throw ValidationError("attrec: n_users, n_items, d and L must be >= 1");
  }
  if (!(omega >= 0.0 && omega <= 1.0)) throw ValidationError(fmt::format("attrec: omega={} must lie in [0, 1]", omega));
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw ValidationError(fmt::format("attrec: margin={} must be finite and >= 0", margin));
  }
  if (!(rho > 0.0) || !std::isfinite(rho)) throw ValidationError(fmt::format("attrec: rho={} must be > 0", rho));
  auto m = std::make_unique<AttRec>();
  Rng rng(seed);
  auto& p = m->params_;
  set_hyper(p, "omega", omega);
  set_hyper(p, "margin", margin);
  set_hyper(p, "rho", rho);
  Tensor X = normal_tensor(Shape{n_items + 1, d}, rng);
  zero_row(X, n_items);
  p.add("X", std::move(X));
  // At the embedding init scale the attention would start out uniform.
  p.add("W_q", normal_tensor(Shape{d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d))));
  p.add("W_k", normal_tensor(Shape{d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d))));
  p.add("U", normal_tensor(Shape{n_users, d}, rng));
  p.add("V", normal_tensor(Shape{n_items, d}, rng));
  m->init_sequential(n_users, n_items, L);
  return m;
}

double AttRec::omega() const { return hyper(params_, "omega"); }
double AttRec::margin() const { return hyper(params_, "margin"); }
double AttRec::rho() const { return hyper(params_, "rho"); }

ad::Var AttRec::attention(Bindings& bind, std::span<const Id> window) {
  const Var ew = ad::embedding_lookup(bind["X"], std::vector<std::uint32_t>(window.begin(), window.end()));
  const Var q = ad::relu(ad::matmul(ew, bind["W_q"]));
  const Var k = ad::relu(ad::matmul(ew, bind["W_k"]));
  const double d = static_cast<double>(ew.shape()[1]);
  return ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(d)));
}

ad::Var AttRec::intent(Bindings& bind, std::span<const Id> window) {
  const Var ew = ad::embedding_lookup(bind["X"], std::vector<std::uint32_t>(window.begin(), window.end()));
  return ad::mean(ad::matmul(attention(bind, window), ew), 0);
}

Tensor AttRec::attention(std::span<const Id> window) const {
  check_window(window);
  ad::Tape tape;
  Bindings bind(tape, params_);
  return attention(bind, window).value();
}

double AttRec::distance(Id user, std::span<const Id> window, Id item) const {
  check_ids(user, item);
  check_window(window);
  ad::Tape tape;
  Bindings bind(tape, params_);
  return batch_distance(bind, {user}, {std::vector<Id>(window.begin(), window.end())}, {item}, omega()).value()[0];
}

void AttRec::score_next(Id user, std::span<const Id> window, std::span<const Id> items, std::span<double> out) const {
  check_window(window);
  check_ids(user, 0);
  const double w = omega();
  const auto& U = params_.at("U");
  const auto& V = params_.at("V");
  const auto& X = params_.at("X");
  std::vector<double> m;
  if (w < 1.0) {
    ad::Tape tape;
    Bindings bind(tape, params_);
    const Tensor t = intent(bind, window).value();
    m.assign(t.values().begin(), t.values().end());
  }
  const auto u = U.row(user);
  for (std::size_t k = 0; k < items.size(); ++k) {
    check_ids(user, items[k]);
    double lt = 0.0, st = 0.0;
    if (w > 0.0) {
      const auto v = V.row(items[k]);
      for (std::size_t f = 0; f < u.size(); ++f) lt += (u[f] - v[f]) * (u[f] - v[f]);
    }
    if (w < 1.0) {
      const auto x = X.row(items[k]);
      for (std::size_t f = 0; f < x.size(); ++f) st += (m[f] - x[f]) * (m[f] - x[f]);
    }
    out[k] = -(w * lt + (1.0 - w) * st);
  }
}

void AttRec::after_update() {
  const double r = rho();
  auto& X = params_.at("X");
  clip_rows(X, r, n_items());
  zero_row(X, n_items());
  clip_rows(params_.at("U"), r);
  clip_rows(params_.at("V"), r);
}

ad::Var AttRec::batch_distance(Bindings& bind, const std::vector<Id>& users,
                               const std::vector<std::vector<Id>>& windows, const std::vector<Id>& items,
                               double omega) {
  Var out;
  // Inactive branches stay off the tape so their tables get no update.
  if (omega > 0.0) {
    const Var u = ad::embedding_lookup(bind["U"], to_indices(users));
    const Var v = ad::embedding_lookup(bind["V"], to_indices(items));
    out = ad::scale(ad::sq_l2_dist(u, v), omega);
  }
  if (omega < 1.0) {
    std::vector<Var> rows;
    rows.reserve(windows.size());
    for (const auto& w : windows) rows.push_back(intent(bind, w));
    const Var m = ad::concat(rows, 0);
    const Var x = ad::embedding_lookup(bind["X"], to_indices(items));
    const Var st = ad::scale(ad::sq_l2_dist(m, x), 1.0 - omega);
    out = out.valid() ? ad::add(out, st) : st;
  }
  return out;
}

ad::Var AttRec::batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<std::vector<Id>>& windows,
                           const std::vector<Id>& pos, const std::vector<Id>& neg, double omega, double margin,
                           double l2) {
  ad::Tape& tape = bind.tape();
  const Var d_pos = batch_distance(bind, users, windows, pos, omega);
  const Var d_neg = batch_distance(bind, users, windows, neg, omega);
  const Var gamma = tape.constant(Tensor::scalar(margin));
  Var per_row = ad::relu(ad::add(ad::sub(d_pos, d_neg), gamma));
  if (l2 != 0.0) {
    Var reg;
    auto acc = [&reg](Var term) { reg = reg.valid() ? ad::add(reg, term) : term; };
    if (omega > 0.0) {
      acc(row_sq_norms(ad::embedding_lookup(bind["U"], to_indices(users))));
      acc(row_sq_norms(ad::embedding_lookup(bind["V"], to_indices(pos))));
      acc(row_sq_norms(ad::embedding_lookup(bind["V"], to_indices(neg))));
    }
    if (omega < 1.0) {
      acc(row_sq_norms(ad::embedding_lookup(bind["X"], to_indices(pos))));
      acc(row_sq_norms(ad::embedding_lookup(bind["X"], to_indices(neg))));
    }
    per_row = ad::add(per_row, ad::scale(reg, l2));
  }
  return ad::mean(per_row);
}

namespace {

class AttRecObjective : public Objective {
 public:
  AttRecObjective(data::SequenceDataset seqs, std::shared_ptr<data::UserItems> consumed, double omega,
                  double margin, double l2, std::size_t batch)
      : seqs_(std::move(seqs)), consumed_(std::move(consumed)), omega_(omega), margin_(margin), l2_(l2),
        batch_(batch) {
    for (const auto& inst : seqs_.instances) {
      if (consumed_->items(inst.user).size() < seqs_.n_items) usable_.push_back(&inst);
    }
    if (usable_.empty()) throw Error("attrec: no training instances");
  }

  std::vector<LossBuilder> epoch(Rng& rng) override {
    const data::NegativeSampler sampler(*consumed_);
    std::vector<LossBuilder> out;
    for (const auto& idx : shuffled_batches(usable_.size(), batch_, rng)) {
      std::vector<Id> users, pos, neg;
      std::vector<std::vector<Id>> windows;
      for (auto k : idx) {
        const auto& inst = *usable_[k];
        users.push_back(inst.user);
        windows.push_back(inst.window);
        pos.push_back(inst.targets.front());
        neg.push_back(sampler.sample(inst.user, rng));
      }
      out.push_back([users = std::move(users), windows = std::move(windows), pos = std::move(pos),
                     neg = std::move(neg), w = omega_, g = margin_, l2 = l2_](Bindings& b) {
        return AttRec::batch_loss(b, users, windows, pos, neg, w, g, l2);
      });
    }
    return out;
  }

 private:
  data::SequenceDataset seqs_;
  std::shared_ptr<data::UserItems> consumed_;
  std::vector<const data::SequenceInstance*> usable_;
  double omega_, margin_, l2_;
  std::size_t batch_;
};

}  // namespace

std::unique_ptr<Objective> AttRec::objective(const TrainData& data, const TrainOptions& options) {
  const auto& table = require_table(data, name());
  if (table.n_users() != n_users() || table.n_items() != n_items()) {
    throw Error("attrec: training table does not match the model's id space");
  }
  auto seqs = data::build_sequences(table, window(), 1);
  store_context(seqs);
  return std::make_unique<AttRecObjective>(std::move(seqs), std::make_shared<data::UserItems>(table), omega(),
                                           margin(), options.l2, options.batch_size);
}

}  // namespace rectape::models
