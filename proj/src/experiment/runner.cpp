#include "rectape/experiment/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "rectape/error.hpp"
#include "rectape/experiment/checkpoint.hpp"
#include "rectape/models/rating.hpp"
#include "rectape/rng.hpp"

namespace rectape::experiment {

namespace {

void split_rows(std::vector<data::SparseRow> rows, const data::SplitSpec& spec, PreparedData& out) {
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(spec.seed);
  rng.shuffle(std::span<std::size_t>(idx));
  const auto n_test = static_cast<std::size_t>(std::llround(spec.ratio * static_cast<double>(rows.size())));
  std::vector<char> is_test(rows.size(), 0);
  for (std::size_t k = 0; k < n_test; ++k) is_test[idx[k]] = 1;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    (is_test[k] ? out.test_rows : out.train_rows).push_back(std::move(rows[k]));
  }
}

const models::FactorizationMachine& as_fm(const models::Model& model) {
  const auto* fm = dynamic_cast<const models::FactorizationMachine*>(&model);
  if (fm == nullptr) throw ValidationError(fmt::format("libfm data needs model 'fm', not '{}'", model.name()));
  return *fm;
}

void write_libfm(const std::string& path, const std::vector<data::SparseRow>& rows) {
  std::string text;
  for (const auto& r : rows) {
    text += fmt::format("{}", r.label);
    for (const auto& [f, v] : r.features) text += fmt::format(" {}:{}", f, v);
    text += '\n';
  }
  write_text(path, text);
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  out.format = config.data.format;
  const auto spec = config.split_spec();
  if (config.data.format == DataFormat::kLibfm) {
    auto rows = data::parse_libfm(config.data.path);
    out.n_features = data::feature_count(rows);
    split_rows(std::move(rows), spec, out);
    if (out.train_rows.empty()) throw Error(fmt::format("'{}': the split leaves no training rows", config.data.path));
    return out;
  }
  auto table = data::load_interactions(config.data.path);
  if (config.data.binarize_threshold) table = data::binarize(table, *config.data.binarize_threshold);
  out.split = data::split(table, spec);
  if (out.split.train.interactions.empty()) {
    throw Error(fmt::format("'{}': the split leaves no training interactions", config.data.path));
  }
  return out;
}

void write_split(const ExperimentConfig& config, const std::string& train_path, const std::string& test_path) {
  const auto data = prepare_data(config);
  if (data.format == DataFormat::kLibfm) {
    write_libfm(train_path, data.train_rows);
    write_libfm(test_path, data.test_rows);
  } else {
    data::write_interactions(train_path, data.split.train);
    data::write_interactions(test_path, data.split.test);
  }
}

metrics::MetricReport evaluate(const models::Model& model, const ExperimentConfig& config, const PreparedData& data) {
  if (model.name() != config.model.name) {
    throw ValidationError(
        fmt::format("checkpoint holds model '{}' but the config names '{}'", model.name(), config.model.name));
  }
  if (data.format == DataFormat::kLibfm) {
    const auto& fm = as_fm(model);
    std::vector<std::pair<double, double>> pairs;
    for (const auto& r : data.test_rows) pairs.emplace_back(fm.serve_row(r), r.label);
    const auto errors = metrics::rmse_mae(pairs);
    metrics::MetricReport report;
    report.protocol = "rating";
    report.values = {{"rmse", errors.rmse}, {"mae", errors.mae}};
    return report;
  }
  const auto& test = data.split.test;
  if (model.n_users() != test.n_users() || model.n_items() != test.n_items()) {
    throw Error(fmt::format("model id space {}x{} does not match the data ({}x{})", model.n_users(), model.n_items(),
                            test.n_users(), test.n_items()));
  }
  if (model.task() == models::Task::kRating) {
    return metrics::evaluate_rating([&model](data::Id u, data::Id i) { return model.score(u, i); }, test);
  }
  metrics::RankingEvalOptions opts;
  opts.protocol = config.protocol();
  opts.cutoffs = config.eval.cutoffs;
  const metrics::Scorer scorer = [&model](data::Id u, std::span<const data::Id> items, std::span<double> out) {
    model.score_items(u, items, out);
  };
  return metrics::evaluate_ranking(scorer, data::UserItems(data.split.train), data::UserItems(test), opts);
}

RunResult run(const ExperimentConfig& config) {
  const auto data = prepare_data(config);
  models::Dims dims;
  models::TrainData train;
  if (data.format == DataFormat::kLibfm) {
    dims.n_features = data.n_features;
    train.rows = &data.train_rows;
  } else {
    dims.n_users = data.split.train.n_users();
    dims.n_items = data.split.train.n_items();
    train.table = &data.split.train;
  }
  spdlog::info("{}: training on {} with split {}", config.model.name, config.data.path, config.data.split);
  RunResult out;
  out.model = models::create_model(config.model, dims, config.train.seed);
  out.trace = out.model->fit(train, config.train_options());
  if (!out.trace.epoch_loss.empty()) {
    spdlog::info("{}: final epoch loss {:.6f}", config.model.name, out.trace.epoch_loss.back());
  }
  out.report = evaluate(*out.model, config, data);
  return out;
}

RunResult run_and_save(const ExperimentConfig& config, const std::string& checkpoint_path,
                       const std::string& report_path) {
  auto out = run(config);
  save_checkpoint(checkpoint_path, *out.model, config.to_text());
  if (!report_path.empty()) write_text(report_path, out.report.to_text());
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path));
  out << text;
  if (!out) throw Error(fmt::format("write to '{}' failed", path));
}

bool raw_id_less(std::string_view a, std::string_view b) {
  auto as_int = [](std::string_view s) -> std::optional<long long> {
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
  };
  const auto x = as_int(a), y = as_int(b);
  if (x && y && *x != *y) return *x < *y;
  return a < b;
}

std::vector<Recommendation> recommend(const models::Model& model, const ExperimentConfig& config,
                                      std::string_view raw_user, std::size_t n) {
  if (n == 0) throw ValidationError("--n must be >= 1");
  if (config.data.format == DataFormat::kLibfm) {
    throw ValidationError("recommend needs interaction data; libfm rows carry no user ids");
  }
  const auto data = prepare_data(config);
  const auto& train = data.split.train;
  if (model.n_users() != train.n_users() || model.n_items() != train.n_items()) {
    throw Error(fmt::format("model id space {}x{} does not match '{}' ({}x{})", model.n_users(), model.n_items(),
                            config.data.path, train.n_users(), train.n_items()));
  }
  const auto user = train.users.find(raw_user);
  if (!user) throw ValidationError(fmt::format("unknown user '{}'", raw_user));
  const data::UserItems seen(train);
  std::vector<data::Id> items;
  for (data::Id i = 0; i < train.n_items(); ++i) {
    if (!seen.contains(*user, i)) items.push_back(i);
  }
  std::vector<double> scores(items.size());
  model.score_items(*user, items, scores);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return raw_id_less(train.items.raw(items[a]), train.items.raw(items[b]));
  };
  const std::size_t k = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  std::vector<Recommendation> out;
  for (std::size_t r = 0; r < k; ++r) out.push_back({train.items.raw(items[order[r]]), scores[order[r]]});
  return out;
}

}  // namespace rectape::experiment
