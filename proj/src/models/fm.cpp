#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "common.hpp"
#include "rectape/models/rating.hpp"

namespace rectape::models {

using namespace detail;

std::unique_ptr<FactorizationMachine> FactorizationMachine::create(std::size_t n_features, std::size_t k, FmTask task,
                                                                   std::uint64_t seed) {
  if (n_features == 0 || k == 0) throw ValidationError("fm: feature count and k must be >= 1");
  auto m = std::make_unique<FactorizationMachine>();
  Rng rng(seed);
  auto& p = m->params_;
  set_hyper(p, "task", task == FmTask::kBinary ? 1.0 : 0.0);
  set_hyper(p, "n_users", 0.0);
  set_hyper(p, "n_items", 0.0);
  p.add("rating_range", Tensor::vector({std::numeric_limits<double>::lowest(), std::numeric_limits<double>::max()}),
        false);
  p.add("w0", Tensor::scalar(0.0));
  p.add("w", Tensor(Shape{n_features, 1}));
  p.add("V", normal_tensor(Shape{n_features, k}, rng));
  return m;
}

std::unique_ptr<FactorizationMachine> FactorizationMachine::create_for_table(std::size_t n_users, std::size_t n_items,
                                                                             std::size_t k, FmTask task,
                                                                             std::uint64_t seed) {
  auto m = create(n_users + n_items, k, task, seed);
  set_hyper(m->params_, "n_users", static_cast<double>(n_users));
  set_hyper(m->params_, "n_items", static_cast<double>(n_items));
  return m;
}

std::size_t FactorizationMachine::n_users() const { return static_cast<std::size_t>(hyper(params_, "n_users")); }
std::size_t FactorizationMachine::n_items() const { return static_cast<std::size_t>(hyper(params_, "n_items")); }
FmTask FactorizationMachine::fm_task() const {
  return hyper(params_, "task") != 0.0 ? FmTask::kBinary : FmTask::kRegression;
}

void FactorizationMachine::set_rating_stats(double lo, double hi) {
  params_.assign("rating_range", Tensor::vector({lo, hi}));
}

double FactorizationMachine::pairwise_term(const Tensor& V, const data::SparseRow& row) {
  double total = 0.0;
  for (std::size_t f = 0; f < V.cols(); ++f) {
    double s = 0.0, s2 = 0.0;
    for (const auto& [i, x] : row.features) {
      const double vx = V.at(i, f) * x;
      s += vx;
      s2 += vx * vx;
    }
    total += s * s - s2;
  }
  return 0.5 * total;
}

double FactorizationMachine::predict_row(const data::SparseRow& row) const {
  const auto& w = params_.at("w");
  const auto& V = params_.at("V");
  double lin = params_.at("w0").item();
  for (const auto& [i, x] : row.features) {
    if (i >= V.rows()) throw Error(fmt::format("fm: feature index {} >= feature count {}", i, V.rows()));
    lin += w[i] * x;
  }
  return lin + pairwise_term(V, row);
}

double FactorizationMachine::serve_row(const data::SparseRow& row) const {
  const double raw = predict_row(row);
  if (fm_task() == FmTask::kBinary) return detail::sigmoid(raw);
  const auto& range = params_.at("rating_range");
  return std::clamp(raw, range[0], range[1]);
}

data::SparseRow FactorizationMachine::two_hot(Id user, Id item) const {
  if (n_users() == 0) throw Error("fm: model was trained on feature rows, not user/item ids");
  check_ids(user, item);
  return data::SparseRow{0.0, {{user, 1.0}, {static_cast<std::uint32_t>(n_users() + item), 1.0}}};
}

double FactorizationMachine::score(Id user, Id item) const { return serve_row(two_hot(user, item)); }

std::vector<data::SparseRow> FactorizationMachine::two_hot_rows(const data::InteractionTable& table) {
  std::vector<data::SparseRow> rows;
  rows.reserve(table.interactions.size());
  const auto offset = static_cast<std::uint32_t>(table.n_users());
  for (const auto& r : table.interactions) rows.push_back({r.rating, {{r.user, 1.0}, {offset + r.item, 1.0}}});
  return rows;
}

ad::Var FactorizationMachine::batch_predictions(Bindings& bind, std::span<const data::SparseRow> rows) {
  ad::Tape& tape = bind.tape();
  const Var w0 = bind["w0"];
  const std::size_t b = rows.size();
  std::vector<std::uint32_t> idx;
  std::vector<double> xs;
  std::vector<std::size_t> seg;
  for (std::size_t r = 0; r < b; ++r) {
    for (const auto& [i, x] : rows[r].features) {
      idx.push_back(i);
      xs.push_back(x);
      seg.push_back(r);
    }
  }
  const Var ones = tape.constant(Tensor(Shape{b, 1}, 1.0));
  if (idx.empty()) return ad::mul(ones, w0);

  const std::size_t nnz = idx.size();
  const Var V = bind["V"];
  const std::size_t k = V.shape()[1];
  // Segment matrix: S[r, e] = 1 when entry e belongs to row r.
  Tensor S(Shape{b, nnz});
  Tensor X(Shape{nnz, k});
  for (std::size_t e = 0; e < nnz; ++e) {
    S.at(seg[e], e) = 1.0;
    for (std::size_t f = 0; f < k; ++f) X.at(e, f) = xs[e];
  }
  const Var seg_sum = tape.constant(std::move(S));
  const Var vx = ad::mul(ad::embedding_lookup(V, idx), tape.constant(std::move(X)));
  const Var sum_vx = ad::matmul(seg_sum, vx);
  const Var sum_v2x2 = ad::matmul(seg_sum, ad::square(vx));
  const Var pair = ad::scale(ad::sum(ad::sub(ad::square(sum_vx), sum_v2x2), 1), 0.5);
  const Var wx = ad::mul(ad::embedding_lookup(bind["w"], idx), tape.constant(Tensor(Shape{nnz, 1}, xs)));
  const Var lin = ad::matmul(seg_sum, wx);
  return ad::add(ad::add(pair, lin), ad::mul(ones, w0));
}

ad::Var FactorizationMachine::batch_loss(Bindings& bind, std::span<const data::SparseRow> rows, FmTask task,
                                         double l2) {
  const Var pred = batch_predictions(bind, rows);
  std::vector<double> labels;
  std::vector<std::uint32_t> idx;
  for (const auto& r : rows) {
    labels.push_back(r.label);
    for (const auto& f : r.features) idx.push_back(f.first);
  }
  const Var y = column(bind.tape(), labels);
  Var loss = task == FmTask::kBinary ? ad::mean(bce_with_logits(pred, y)) : ad::mean(ad::square(ad::sub(pred, y)));
  if (l2 != 0.0 && !idx.empty()) {
    const Var reg = ad::add(ad::sum_squares(ad::embedding_lookup(bind["w"], idx)),
                            ad::sum_squares(ad::embedding_lookup(bind["V"], idx)));
    loss = ad::add(loss, ad::scale(reg, l2 / static_cast<double>(rows.size())));
  }
  return loss;
}

namespace {

class FmObjective : public Objective {
 public:
  FmObjective(std::vector<data::SparseRow> rows, FmTask task, double l2, std::size_t batch)
      : rows_(std::make_shared<std::vector<data::SparseRow>>(std::move(rows))), task_(task), l2_(l2), batch_(batch) {}

  std::vector<LossBuilder> epoch(Rng& rng) override {
    std::vector<LossBuilder> out;
    for (const auto& idx : shuffled_batches(rows_->size(), batch_, rng)) {
      std::vector<data::SparseRow> batch;
      batch.reserve(idx.size());
      for (auto k : idx) batch.push_back((*rows_)[k]);
      out.push_back([batch = std::move(batch), task = task_, l2 = l2_](Bindings& b) {
        return FactorizationMachine::batch_loss(b, batch, task, l2);
      });
    }
    return out;
  }

 private:
  std::shared_ptr<std::vector<data::SparseRow>> rows_;
  FmTask task_;
  double l2_;
  std::size_t batch_;
};

}  // namespace

std::unique_ptr<Objective> FactorizationMachine::objective(const TrainData& data, const TrainOptions& options) {
  std::vector<data::SparseRow> rows;
  if (data.rows) {
    rows = *data.rows;
  } else {
    const auto& table = require_table(data, name());
    if (table.n_users() != n_users() || table.n_items() != n_items()) {
      throw Error("fm: training table does not match the model's id space");
    }
    rows = two_hot_rows(table);
  }
  if (rows.empty()) throw Error("fm: training data is empty");
  double lo = rows.front().label, hi = lo;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double y = rows[r].label;
    if (fm_task() == FmTask::kBinary && y != 0.0 && y != 1.0) {
      throw Error(fmt::format("fm: binary task needs labels in {{0, 1}}, row {} has {}", r + 1, y));
    }
    for (const auto& f : rows[r].features) {
      if (f.first >= n_features()) {
        throw Error(fmt::format("fm: row {} has feature index {} >= feature count {}", r + 1, f.first, n_features()));
      }
    }
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  set_rating_stats(lo, hi);
  return std::make_unique<FmObjective>(std::move(rows), fm_task(), options.l2, options.batch_size);
}

}  // namespace rectape::models
