#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "rectape/models/model.hpp"

namespace rectape::models {

/// Global mean + user/item biases + inner product of latent factors.
/// Trains on unclipped scores; serves scores clipped to the training range.
class BiasedSvd : public Model {
 public:
  static std::unique_ptr<BiasedSvd> create(std::size_t n_users, std::size_t n_items, std::size_t k,
                                           std::uint64_t seed);

  std::string_view name() const override { return "biasedsvd"; }
  Task task() const override { return Task::kRating; }
  std::size_t n_users() const override { return params_.at("P").rows(); }
  std::size_t n_items() const override { return params_.at("Q").rows(); }

  double raw_score(Id user, Id item) const;
  double score(Id user, Id item) const override;

  /// Sets the global mean and the serving range.
  void set_rating_stats(double mu, double lo, double hi);

  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;

  /// Mean over the batch of (r - s)^2 + l2 (b_u^2 + b_i^2 + |P_u|^2 + |Q_i|^2).
  static ad::Var batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<Id>& items,
                            const std::vector<double>& ratings, double l2);
};

enum class FmTask { kRegression, kBinary };

/// Degree-2 factorization machine over sparse rows. When trained on an
/// interaction table, each (user, item) becomes a two-hot row: the user
/// index followed by the item index offset by n_users.
class FactorizationMachine : public Model {
 public:
  static std::unique_ptr<FactorizationMachine> create(std::size_t n_features, std::size_t k, FmTask task,
                                                      std::uint64_t seed);
  /// Two-hot layout over an interaction table's id space.
  static std::unique_ptr<FactorizationMachine> create_for_table(std::size_t n_users, std::size_t n_items,
                                                                std::size_t k, FmTask task, std::uint64_t seed);

  std::string_view name() const override { return "fm"; }
  Task task() const override { return Task::kRating; }
  std::size_t n_users() const override;
  std::size_t n_items() const override;
  std::size_t n_features() const { return params_.at("V").rows(); }
  FmTask fm_task() const;

  /// w0 + sum_i w_i x_i + pairwise term (a logit in binary mode).
  double predict_row(const data::SparseRow& row) const;
  /// Clipped rating (regression) or probability (binary).
  double serve_row(const data::SparseRow& row) const;
  double score(Id user, Id item) const override;

  data::SparseRow two_hot(Id user, Id item) const;
  static std::vector<data::SparseRow> two_hot_rows(const data::InteractionTable& table);

  /// Linear-time pairwise interaction 1/2 sum_f [(sum_i V_if x_i)^2 - sum_i V_if^2 x_i^2].
  static double pairwise_term(const Tensor& V, const data::SparseRow& row);

  void set_rating_stats(double lo, double hi);

  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;

  /// Predictions [b x 1] for a batch of rows, on the tape.
  static ad::Var batch_predictions(Bindings& bind, std::span<const data::SparseRow> rows);
  /// Mean squared or logistic loss plus l2 on the touched w and V rows (w0 unregularized).
  static ad::Var batch_loss(Bindings& bind, std::span<const data::SparseRow> rows, FmTask task, double l2);
};

/// Item-based autoencoder: each item's rating column over users is encoded
/// through a sigmoid hidden layer and decoded linearly.
class AutoRec : public Model {
 public:
  static std::unique_ptr<AutoRec> create(std::size_t n_users, std::size_t n_items, std::size_t hidden,
                                         std::uint64_t seed);

  std::string_view name() const override { return "autorec"; }
  Task task() const override { return Task::kRating; }
  std::size_t n_users() const override { return params_.at("W").rows(); }
  std::size_t n_items() const override { return n_items_; }
  std::size_t hidden() const { return params_.at("V").rows(); }

  /// Unclipped reconstruction over all users from an item's observed (user, rating) entries.
  std::vector<double> reconstruct(const std::vector<std::pair<Id, double>>& column) const;
  double score(Id user, Id item) const override;

  void set_rating_range(double lo, double hi);
  /// Replaces the stored training observations used at serving time.
  void set_observations(const data::InteractionTable& train);

  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;
  void refresh() override;

  /// sum(((r - f(r .* mask)) .* mask)^2) + reg_scale * l2/2 (|W|^2 + |V|^2) over a
  /// batch of item columns [b x n_users].
  static ad::Var batch_loss(Bindings& bind, const Tensor& ratings, const Tensor& mask, double l2, double reg_scale);

 private:
  std::size_t n_items_ = 0;
  /// Hidden code per item from its training column.
  Tensor hidden_cache_;
};

}  // namespace rectape::models
