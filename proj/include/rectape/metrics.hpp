#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rectape/data.hpp"

namespace rectape::metrics {

using data::Id;

struct RatingErrors {
  double rmse = 0.0;
  double mae = 0.0;
};

/// RMSE and MAE over (predicted, actual) pairs. Throws on an empty list.
RatingErrors rmse_mae(std::span<const std::pair<double, double>> pairs);

struct RankingResult {
  Id user = 0;
  /// Candidate items, best first, no duplicates.
  std::vector<Id> ranked;
  std::vector<Id> relevant;
};

struct UserMetrics {
  /// One entry per cutoff, in the order the cutoffs were given.
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> ndcg;
  /// Reciprocal rank of the first relevant item over the full list; 0 if absent.
  double mrr = 0.0;
};

/// Per-user metrics with binary relevance and a 1/log2(rank+1) discount.
/// Returns nullopt for an empty relevant set.
std::optional<UserMetrics> ranking_metrics(const RankingResult& result, std::span<const std::size_t> cutoffs);

/// 1-based position of `target` when items are sorted by descending score,
/// ties broken by ascending item id.
std::size_t rank_of(std::span<const double> scores, Id target);

/// Sorts candidates by descending score, ties by ascending id. Rejects non-finite scores.
std::vector<Id> rank_candidates(Id user, std::span<const Id> candidates, std::span<const double> scores);

struct Protocol {
  enum class Kind { kFull, kSampled };
  Kind kind = Kind::kFull;
  std::size_t negatives = 0;
  std::uint64_t seed = 0;

  static Protocol full() { return {}; }
  static Protocol sampled(std::size_t m, std::uint64_t seed) { return {Kind::kSampled, m, seed}; }
  /// Parses "full" or "sampled:<m>".
  static Protocol parse(std::string_view text, std::uint64_t seed);
  std::string to_string() const;
};

/// Ordered metric values plus the settings needed to reproduce them.
struct MetricReport {
  std::string protocol;
  std::uint64_t seed = 0;
  std::size_t users = 0;
  std::size_t skipped_users = 0;
  std::vector<std::pair<std::string, double>> values;

  bool contains(std::string_view key) const;
  double at(std::string_view key) const;
  /// "key<TAB>value" lines: protocol, seed and users headers, then every metric
  /// with six decimals.
  std::string to_text() const;
};

/// Fills `out[k]` with the score of `items[k]` for `user`. Higher is better.
using Scorer = std::function<void(Id user, std::span<const Id> items, std::span<double> out)>;
Scorer pointwise(std::function<double(Id user, Id item)> score);

struct RankingEvalOptions {
  Protocol protocol;
  std::vector<std::size_t> cutoffs{10};
  /// Worker threads for per-user scoring; the report does not depend on it.
  std::size_t threads = 1;
};

/// Ranks each test user's candidates and macro-averages the metrics in
/// ascending user order. Full protocol: every item not in the user's train
/// set. Sampled protocol: the user's test items plus m distinct seeded
/// negatives drawn from items outside the user's train and test sets.
MetricReport evaluate_ranking(const Scorer& score, const data::UserItems& train, const data::UserItems& test,
                              const RankingEvalOptions& options);

/// RMSE/MAE of a rating predictor over every test interaction.
MetricReport evaluate_rating(const std::function<double(Id user, Id item)>& predict,
                             const data::InteractionTable& test);

}  // namespace rectape::metrics
