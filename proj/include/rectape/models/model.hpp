#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rectape/data.hpp"
#include "rectape/grad_check.hpp"
#include "rectape/optim.hpp"
#include "rectape/param_store.hpp"

namespace rectape::models {

using data::Id;

enum class Task { kRating, kRanking, kSequential };
std::string_view task_name(Task task);

/// Structural hyperparameters, fixed when parameters are allocated.
struct ModelSpec {
  std::string name;
  std::size_t k = 8;
  /// MLP tower sizes for mlp/neumf, input first; empty means {2k, k, k/2}.
  std::vector<std::size_t> layers;
  std::size_t L = 5;
  std::size_t T = 1;
  double margin = 0.5;
  double alpha = 0.5;
  double omega = 0.5;
  double dropout_q = 0.0;
  std::size_t n_h = 4;
  std::size_t n_v = 2;
  double clip_rho = 1.0;
};

struct Dims {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  /// Feature dimension for FM on libfm rows; 0 means one-hot user + item.
  std::size_t n_features = 0;
  /// Labels are 0/1; FM then trains with cross-entropy.
  bool binary_labels = false;
};

struct TrainData {
  const data::InteractionTable* table = nullptr;
  const std::vector<data::SparseRow>* rows = nullptr;
};

class Model;

struct TrainOptions {
  OptimizerState optimizer = OptimizerState::adam(1e-3);
  double l2 = 0.0;
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  std::size_t neg_samples = 1;
  std::uint64_t seed = 0;
  /// Called after every optimizer step and constraint projection.
  std::function<void(const Model&)> after_step;
};

struct TrainTrace {
  /// Mean minibatch loss per epoch.
  std::vector<double> epoch_loss;
  /// Users skipped because they consumed every item.
  std::size_t skipped_users = 0;
  std::size_t steps = 0;
};

/// A training problem bound to one dataset.
class Objective {
 public:
  virtual ~Objective() = default;
  /// Minibatch losses for one pass over the data; sampling draws from `rng`.
  virtual std::vector<LossBuilder> epoch(Rng& rng) = 0;
  virtual std::size_t skipped_users() const { return 0; }
};

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string_view name() const = 0;
  virtual Task task() const = 0;
  virtual std::size_t n_users() const = 0;
  virtual std::size_t n_items() const = 0;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Predicted rating for rating models; higher-is-better relevance otherwise.
  virtual double score(Id user, Id item) const = 0;
  virtual void score_items(Id user, std::span<const Id> items, std::span<double> out) const;

  /// Records data-derived state (means, observed sets, contexts) and returns
  /// the objective that `fit` minimizes.
  virtual std::unique_ptr<Objective> objective(const TrainData& data, const TrainOptions& options) = 0;
  /// Re-imposes parameter constraints after an update.
  virtual void after_update() {}
  /// Rebuilds scoring caches from the current parameters.
  virtual void refresh() {}

  TrainTrace fit(const TrainData& data, const TrainOptions& options);

 protected:
  void check_ids(Id user, Id item) const;

  ParamStore params_;
};

/// Models that score the next item from a window of recent items.
class SequentialModel : public Model {
 public:
  Task task() const override { return Task::kSequential; }
  std::size_t window() const { return window_; }

  double score(Id user, Id item) const override;
  void score_items(Id user, std::span<const Id> items, std::span<double> out) const override;

  /// Higher-is-better scores for `items` given an explicit window of L ids
  /// (padding id = n_items).
  virtual void score_next(Id user, std::span<const Id> window, std::span<const Id> items,
                          std::span<double> out) const = 0;

  /// The stored window of a user's most recent training items.
  std::span<const double> context(Id user) const;

  /// Reads the window length back from the parameters.
  void refresh() override;

 protected:
  /// Records L and an all-padding context for every user.
  void init_sequential(std::size_t n_users, std::size_t n_items, std::size_t window);
  void store_context(const data::SequenceDataset& seqs);
  void check_window(std::span<const Id> window) const;

  std::size_t window_ = 1;
};

const std::vector<std::string>& model_names();
Task task_of(std::string_view name);

/// Allocates and initializes a model from its spec.
std::unique_ptr<Model> create_model(const ModelSpec& spec, const Dims& dims, std::uint64_t seed);
/// Rebuilds a model from saved parameters.
std::unique_ptr<Model> restore_model(std::string_view name, ParamStore params);

/// Item popularity in the training data; scores are interaction counts.
class Popularity {
 public:
  Popularity(const data::InteractionTable& train);
  double score(Id item) const { return counts_.at(item); }
  void score_items(Id user, std::span<const Id> items, std::span<double> out) const;

 private:
  std::vector<double> counts_;
};

}  // namespace rectape::models
