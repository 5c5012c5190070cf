#pragma once

#include <memory>
#include <span>
#include <vector>

#include "rectape/models/model.hpp"

namespace rectape::models {

/// First-order metric embedding: a blend of user-to-item and
/// previous-item-to-item squared distances. Lower distance is better.
class Prme : public SequentialModel {
 public:
  static std::unique_ptr<Prme> create(std::size_t n_users, std::size_t n_items, std::size_t k, double alpha,
                                      std::uint64_t seed);

  std::string_view name() const override { return "prme"; }
  std::size_t n_users() const override { return params_.at("P_U").rows(); }
  std::size_t n_items() const override { return params_.at("P_P").rows(); }
  double alpha() const;

  /// alpha |P_U[u] - P_P[i]|^2 + (1 - alpha) |P_S[prev] - P_S[i]|^2. A padding
  /// `prev` contributes no sequential term.
  double distance(Id user, Id prev, Id item) const;
  void score_next(Id user, std::span<const Id> window, std::span<const Id> items,
                  std::span<double> out) const override;

  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;

  /// Mean of -ln sigmoid(d(neg) - d(pos)) plus alpha-weighted l2 on the rows used.
  static ad::Var batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<Id>& prev,
                            const std::vector<Id>& pos, const std::vector<Id>& neg, double alpha, double l2);
};

/// Convolutional sequence model: horizontal filters of every height 1..L with
/// max-over-time pooling, vertical filters over the window, a dense layer,
/// and a user embedding, scored against per-item output weights.
class Caser : public SequentialModel {
 public:
  /// Trains on the next T items of every window.
  static std::unique_ptr<Caser> create(std::size_t n_users, std::size_t n_items, std::size_t d, std::size_t L,
                                       std::size_t T, std::size_t n_h, std::size_t n_v, std::uint64_t seed);

  std::string_view name() const override { return "caser"; }
  std::size_t n_users() const override { return params_.at("P").rows(); }
  std::size_t n_items() const override { return params_.at("W_out").rows(); }

  /// Scores for every item given a window of L ids.
  std::vector<double> forward(Id user, std::span<const Id> window) const;
  void score_next(Id user, std::span<const Id> window, std::span<const Id> items,
                  std::span<double> out) const override;

  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;
  /// Keeps the padding embedding row at zero.
  void after_update() override;

  /// concat(z, P_u) as a [1 x 2d] node.
  static ad::Var user_vector(Bindings& bind, Id user, std::span<const Id> window);
  /// Logits [c x 1] for `candidates`.
  static ad::Var logits(Bindings& bind, ad::Var user_vec, const std::vector<Id>& candidates);

  struct Instance {
    Id user = 0;
    std::vector<Id> window;
    std::vector<Id> targets;
    std::vector<Id> negatives;
  };
  /// Mean over instances of the summed cross-entropy over targets (label 1)
  /// and negatives (label 0), plus l2 on the looked-up embedding rows.
  static ad::Var batch_loss(Bindings& bind, const std::vector<Instance>& batch, double l2);
};

/// Self-attention short-term intent combined with a metric long-term term.
/// Lower distance is better.
class AttRec : public SequentialModel {
 public:
  static std::unique_ptr<AttRec> create(std::size_t n_users, std::size_t n_items, std::size_t d, std::size_t L,
                                        double omega, double margin, double rho, std::uint64_t seed);

  std::string_view name() const override { return "attrec"; }
  std::size_t n_users() const override { return params_.at("U").rows(); }
  std::size_t n_items() const override { return params_.at("V").rows(); }
  double omega() const;
  double margin() const;
  double rho() const;

  /// Row-stochastic [L x L] attention over the window.
  Tensor attention(std::span<const Id> window) const;
  /// omega |U_u - V_i|^2 + (1 - omega) |m - X_i|^2.
  double distance(Id user, std::span<const Id> window, Id item) const;
  void score_next(Id user, std::span<const Id> window, std::span<const Id> items,
                  std::span<double> out) const override;

  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;
  /// Clips embedding rows of X, U and V to norm rho; the padding row stays zero.
  void after_update() override;

  /// Attention matrix [L x L] and intent m [1 x d] for one window.
  static ad::Var attention(Bindings& bind, std::span<const Id> window);
  static ad::Var intent(Bindings& bind, std::span<const Id> window);
  /// Distances [b x 1] for (user, window, item) rows.
  static ad::Var batch_distance(Bindings& bind, const std::vector<Id>& users,
                                const std::vector<std::vector<Id>>& windows, const std::vector<Id>& items,
                                double omega);
  /// Mean of [margin + d(pos) - d(neg)]_+ plus l2 on the looked-up rows.
  static ad::Var batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<std::vector<Id>>& windows,
                            const std::vector<Id>& pos, const std::vector<Id>& neg, double omega, double margin,
                            double l2);
};

}  // namespace rectape::models
