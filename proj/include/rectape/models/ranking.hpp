#pragma once

#include <memory>
#include <span>
#include <vector>

#include "rectape/models/model.hpp"

namespace rectape::models {

/// Matrix factorization trained with the pairwise BPR criterion.
class BprMf : public Model {
 public:
  static std::unique_ptr<BprMf> create(std::size_t n_users, std::size_t n_items, std::size_t k, std::uint64_t seed);

  std::string_view name() const override { return "bprmf"; }
  Task task() const override { return Task::kRanking; }
  std::size_t n_users() const override { return params_.at("P").rows(); }
  std::size_t n_items() const override { return params_.at("Q").rows(); }

  double score(Id user, Id item) const override;
  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;

  /// Mean over rows of -ln sigmoid(pu.qi - pu.qj) + l2 (|pu|^2 + |qi|^2 + |qj|^2).
  static ad::Var bpr_loss(ad::Var pu, ad::Var qi, ad::Var qj, double l2);
  static ad::Var batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<Id>& pos,
                            const std::vector<Id>& neg, double l2);
};

/// Metric learning: users and items are points in the unit ball; preference
/// is small squared Euclidean distance.
class Cml : public Model {
 public:
  static std::unique_ptr<Cml> create(std::size_t n_users, std::size_t n_items, std::size_t k, double margin,
                                     std::uint64_t seed);

  std::string_view name() const override { return "cml"; }
  Task task() const override { return Task::kRanking; }
  std::size_t n_users() const override { return params_.at("U").rows(); }
  std::size_t n_items() const override { return params_.at("V").rows(); }
  double margin() const;

  /// Negative squared distance.
  double score(Id user, Id item) const override;
  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;
  /// Projects every row of U and V onto the unit ball.
  void after_update() override;

  /// Mean over rows of sum_j [margin + d2(u, vi) - d2(u, vj)]_+.
  static ad::Var hinge_loss(ad::Var u, ad::Var vi, std::span<const ad::Var> vj, double margin);
  /// `neg[s]` holds the s-th negative for every row.
  static ad::Var batch_loss(Bindings& bind, const std::vector<Id>& users, const std::vector<Id>& pos,
                            const std::vector<std::vector<Id>>& neg, double margin, double l2);
};

enum class NcfVariant { kGmf, kMlp, kNeuMf };

/// GMF, MLP and their fusion NeuMF, trained jointly with binary cross-entropy.
class NeuMf : public Model {
 public:
  /// `layers` is the MLP tower, input first; empty means {2k, k, k/2}.
  static std::unique_ptr<NeuMf> create(NcfVariant variant, std::size_t n_users, std::size_t n_items, std::size_t k,
                                       std::vector<std::size_t> layers, std::uint64_t seed);

  std::string_view name() const override;
  Task task() const override { return Task::kRanking; }
  std::size_t n_users() const override;
  std::size_t n_items() const override;
  NcfVariant variant() const;

  /// Probability-like score sigmoid(logit).
  double score(Id user, Id item) const override;
  double logit(Id user, Id item) const;
  /// P_g,u .* Q_g,i
  std::vector<double> gmf_vector(Id user, Id item) const;
  /// Last hidden layer of the relu tower.
  std::vector<double> mlp_hidden(Id user, Id item) const;

  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;

  /// Logits [b x 1] on the tape.
  static ad::Var batch_logits(Bindings& bind, NcfVariant variant, const std::vector<Id>& users,
                              const std::vector<Id>& items);
  /// Mean binary cross-entropy plus l2 on the looked-up embeddings.
  static ad::Var batch_loss(Bindings& bind, NcfVariant variant, const std::vector<Id>& users,
                            const std::vector<Id>& items, const std::vector<double>& labels, double l2);
};

/// Denoising autoencoder over a user's item vector with a per-user input node.
class Cdae : public Model {
 public:
  static std::unique_ptr<Cdae> create(std::size_t n_users, std::size_t n_items, std::size_t hidden, double q,
                                      std::uint64_t seed);

  std::string_view name() const override { return "cdae"; }
  Task task() const override { return Task::kRanking; }
  std::size_t n_users() const override { return params_.at("V_u").rows(); }
  std::size_t n_items() const override { return params_.at("W").rows(); }
  double corruption() const;

  /// sigmoid(W'^T sigmoid(W^T y + V_u + b) + b') for every item.
  std::vector<double> forward(Id user, std::span<const double> y) const;
  double score(Id user, Id item) const override;

  void set_observations(const data::InteractionTable& train);
  std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) override;
  void refresh() override;

  /// Weighted logistic loss over [b x n_items] targets. The corruption mask
  /// comes from `corruption_seed`, so the loss is a deterministic function of
  /// the parameters.
  static ad::Var batch_loss(Bindings& bind, const std::vector<Id>& users, const Tensor& targets,
                            const Tensor& weights, double q, std::uint64_t corruption_seed, double l2,
                            double reg_scale);

 private:
  /// sigmoid hidden code per user from the uncorrupted training vector.
  Tensor code_cache_;
};

}  // namespace rectape::models
