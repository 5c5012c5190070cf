#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rectape/experiment/config.hpp"
#include "rectape/metrics.hpp"
#include "rectape/models/model.hpp"

namespace rectape::experiment {

/// Loaded and split data. Interaction data fills `split`; libfm data fills
/// the row vectors.
struct PreparedData {
  DataFormat format = DataFormat::kUirt;
  data::SplitResult split;
  std::vector<data::SparseRow> train_rows;
  std::vector<data::SparseRow> test_rows;
  std::size_t n_features = 0;
};

PreparedData prepare_data(const ExperimentConfig& config);

/// Writes the train and test parts in the input format.
void write_split(const ExperimentConfig& config, const std::string& train_path, const std::string& test_path);

/// RMSE/MAE for rating models, ranking metrics at every cutoff otherwise.
metrics::MetricReport evaluate(const models::Model& model, const ExperimentConfig& config, const PreparedData& data);

struct RunResult {
  std::unique_ptr<models::Model> model;
  models::TrainTrace trace;
  metrics::MetricReport report;
};

/// Load, split, train and evaluate.
RunResult run(const ExperimentConfig& config);

/// `run` plus persistence: the checkpoint always, the report when a path is given.
RunResult run_and_save(const ExperimentConfig& config, const std::string& checkpoint_path,
                       const std::string& report_path = {});

void write_text(const std::string& path, const std::string& text);

struct Recommendation {
  std::string item;
  double score = 0.0;
};

/// Top `n` unseen items for a raw user id, by descending score with ties
/// broken by ascending raw item id. The data named in the config echo is
/// reloaded to rebuild the id maps and the seen sets.
std::vector<Recommendation> recommend(const models::Model& model, const ExperimentConfig& config,
                                      std::string_view raw_user, std::size_t n);

/// Orders raw ids numerically when both are integers, otherwise bytewise.
bool raw_id_less(std::string_view a, std::string_view b);

}  // namespace rectape::experiment
