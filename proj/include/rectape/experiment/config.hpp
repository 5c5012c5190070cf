#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rectape/data.hpp"
#include "rectape/metrics.hpp"
#include "rectape/models/model.hpp"
#include "rectape/optim.hpp"

namespace rectape::experiment {

enum class DataFormat { kUirt, kLibfm };

struct DataConfig {
  std::string path;
  DataFormat format = DataFormat::kUirt;
  std::string split;
  std::uint64_t seed = 0;
  std::optional<double> binarize_threshold;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 0.0;
  double l2 = 0.0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  std::optional<std::size_t> neg_samples;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  std::vector<std::size_t> cutoffs;
  std::string protocol;
};

/// One experiment as written in an INI-style file with sections [data],
/// [model], [train] and [eval]. Parsing validates everything up front and
/// throws a single ValidationError listing every problem.
struct ExperimentConfig {
  DataConfig data;
  models::ModelSpec model;
  TrainConfig train;
  EvalConfig eval;

  static ExperimentConfig parse(std::string_view text);
  /// Reads a config file; a relative data path is resolved against the file's directory.
  static ExperimentConfig load(const std::string& path);

  /// Canonical text form; parse(to_text()) reproduces the config.
  std::string to_text() const;

  models::Task task() const { return models::task_of(model.name); }
  data::SplitSpec split_spec() const;
  metrics::Protocol protocol() const;
  models::TrainOptions train_options() const;
};

/// Keys a model reads from [model], besides `name`.
const std::vector<std::string>& model_keys(std::string_view model_name);

}  // namespace rectape::experiment
