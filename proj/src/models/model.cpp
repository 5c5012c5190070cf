#include "rectape/models/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "common.hpp"

namespace rectape::models {

std::string_view task_name(Task task) {
  switch (task) {
    case Task::kRating: return "rating";
    case Task::kRanking: return "ranking";
    case Task::kSequential: return "sequential";
  }
  return "?";
}

void Model::score_items(Id user, std::span<const Id> items, std::span<double> out) const {
  for (std::size_t k = 0; k < items.size(); ++k) out[k] = score(user, items[k]);
}

void Model::check_ids(Id user, Id item) const {
  if (user >= n_users() || item >= n_items()) {
    throw Error(fmt::format("{}: ids (user {}, item {}) out of range ({} users, {} items)", name(), user, item,
                            n_users(), n_items()));
  }
}

TrainTrace Model::fit(const TrainData& data, const TrainOptions& options) {
  auto obj = objective(data, options);
  OptimizerState opt = options.optimizer;
  TrainTrace trace;
  trace.skipped_users = obj->skipped_users();
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(derive_seed(options.seed, epoch));
    const auto batches = obj->epoch(rng);
    double total = 0.0;
    for (const auto& build : batches) {
      ad::Tape tape;
      Bindings bind(tape, params_);
      const ad::Var loss = build(bind);
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw DivergenceError(epoch, value);
      const auto grads = bind.collect(tape.backward(loss));
      optimizer_step(params_, grads, opt);
      after_update();
      ++trace.steps;
      if (options.after_step) options.after_step(*this);
      total += value;
    }
    const double mean_loss = batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
    trace.epoch_loss.push_back(mean_loss);
    spdlog::debug("{} epoch {} loss {:.6f}", name(), epoch, mean_loss);
  }
  refresh();
  return trace;
}

double SequentialModel::score(Id user, Id item) const {
  double out = 0.0;
  score_items(user, std::span<const Id>(&item, 1), std::span<double>(&out, 1));
  return out;
}

void SequentialModel::score_items(Id user, std::span<const Id> items, std::span<double> out) const {
  const auto ctx = context(user);
  std::vector<Id> window(ctx.size());
  for (std::size_t k = 0; k < ctx.size(); ++k) window[k] = static_cast<Id>(ctx[k]);
  score_next(user, window, items, out);
}

std::span<const double> SequentialModel::context(Id user) const {
  if (user >= n_users()) throw Error(fmt::format("{}: user {} out of range", name(), user));
  return params_.at("context").row(user);
}

void SequentialModel::store_context(const data::SequenceDataset& seqs) {
  Tensor ctx(Shape{seqs.n_users, window_});
  for (Id u = 0; u < seqs.n_users; ++u) {
    const auto w = seqs.last_window(u);
    for (std::size_t k = 0; k < window_; ++k) ctx.at(u, k) = w[k];
  }
  params_.put_state("context", std::move(ctx));
}

void SequentialModel::refresh() { window_ = static_cast<std::size_t>(detail::hyper(params_, "L")); }

void SequentialModel::init_sequential(std::size_t n_users, std::size_t n_items, std::size_t window) {
  window_ = window;
  detail::set_hyper(params_, "L", static_cast<double>(window));
  params_.put_state("context", Tensor(Shape{n_users, window}, static_cast<double>(n_items)));
}

void SequentialModel::check_window(std::span<const Id> window) const {
  if (window.size() != window_) {
    throw Error(fmt::format("{}: window has {} items, expected {}", name(), window.size(), window_));
  }
  for (Id id : window) {
    if (id > n_items()) throw Error(fmt::format("{}: window item {} out of range", name(), id));
  }
}

Popularity::Popularity(const data::InteractionTable& train) : counts_(train.n_items(), 0.0) {
  for (const auto& r : train.interactions) counts_[r.item] += 1.0;
}

void Popularity::score_items(Id, std::span<const Id> items, std::span<double> out) const {
  for (std::size_t k = 0; k < items.size(); ++k) out[k] = counts_.at(items[k]);
}

namespace detail {

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return out;
}

void clip_rows(Tensor& table, double radius, std::size_t skip_row) {
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (r == skip_row) continue;
    auto row = table.row(r);
    const double norm = std::sqrt(squared_norm(row));
    if (norm > radius) {
      const double f = radius / norm;
      for (auto& v : row) v *= f;
    }
  }
}

Positives collect_positives(const data::InteractionTable& table, std::string_view model) {
  Positives pos;
  pos.consumed = std::make_shared<data::UserItems>(table);
  std::vector<char> full(table.n_users(), 0);
  for (Id u = 0; u < table.n_users(); ++u) {
    if (!pos.consumed->items(u).empty() && pos.consumed->items(u).size() >= table.n_items()) {
      full[u] = 1;
      ++pos.full_users;
    }
  }
  for (const auto& r : table.interactions) {
    if (!full[r.user]) pos.pairs.emplace_back(r.user, r.item);
  }
  if (pos.full_users > 0) {
    spdlog::warn("{}: skipped {} users who consumed every item", model, pos.full_users);
  }
  if (pos.pairs.empty()) throw Error(fmt::format("{}: no trainable interactions", model));
  return pos;
}

const data::InteractionTable& require_table(const TrainData& data, std::string_view model) {
  if (!data.table) throw Error(fmt::format("{}: training needs an interaction table", model));
  if (data.table->interactions.empty()) throw Error(fmt::format("{}: training data is empty", model));
  return *data.table;
}

}  // namespace detail
}  // namespace rectape::models
