#include "rectape/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "rectape/error.hpp"

namespace rectape::metrics {

RatingErrors rmse_mae(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw Error("rmse_mae: empty prediction list");
  double sq = 0.0, abs_sum = 0.0;
  for (const auto& [pred, actual] : pairs) {
    const double e = pred - actual;
    sq += e * e;
    abs_sum += std::abs(e);
  }
  const auto n = static_cast<double>(pairs.size());
  return {std::sqrt(sq / n), abs_sum / n};
}

std::optional<UserMetrics> ranking_metrics(const RankingResult& result, std::span<const std::size_t> cutoffs) {
  if (result.relevant.empty()) return std::nullopt;
  std::vector<Id> relevant = result.relevant;
  std::sort(relevant.begin(), relevant.end());
  relevant.erase(std::unique(relevant.begin(), relevant.end()), relevant.end());
  auto is_relevant = [&](Id i) { return std::binary_search(relevant.begin(), relevant.end(), i); };

  UserMetrics m;
  for (std::size_t r = 0; r < result.ranked.size(); ++r) {
    if (is_relevant(result.ranked[r])) {
      m.mrr = 1.0 / static_cast<double>(r + 1);
      break;
    }
  }
  for (const std::size_t n : cutoffs) {
    if (n < 1) throw Error("ranking_metrics: cutoffs must be >= 1");
    std::size_t hits = 0;
    double dcg = 0.0;
    const std::size_t depth = std::min(n, result.ranked.size());
    for (std::size_t r = 0; r < depth; ++r) {
      if (is_relevant(result.ranked[r])) {
        ++hits;
        dcg += 1.0 / std::log2(static_cast<double>(r + 2));
      }
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(n, relevant.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r + 2));
    m.precision.push_back(static_cast<double>(hits) / static_cast<double>(n));
    m.recall.push_back(static_cast<double>(hits) / static_cast<double>(relevant.size()));
    m.ndcg.push_back(dcg / idcg);
  }
  return m;
}

namespace {

bool ranks_before(double sa, Id a, double sb, Id b) { return sa != sb ? sa > sb : a < b; }

}  // namespace

std::size_t rank_of(std::span<const double> scores, Id target) {
  const double st = scores[target];
  std::size_t better = 0;
  for (Id i = 0; i < scores.size(); ++i) {
    if (i != target && ranks_before(scores[i], i, st, target)) ++better;
  }
  return better + 1;
}

std::vector<Id> rank_candidates(Id user, std::span<const Id> candidates, std::span<const double> scores) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (!std::isfinite(scores[k])) {
      throw Error(fmt::format("non-finite score {} for user {} item {}", scores[k], user, candidates[k]));
    }
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a], candidates[a], scores[b], candidates[b]);
  });
  std::vector<Id> out(candidates.size());
  for (std::size_t k = 0; k < order.size(); ++k) out[k] = candidates[order[k]];
  return out;
}

Protocol Protocol::parse(std::string_view text, std::uint64_t seed) {
  if (text == "full") return full();
  constexpr std::string_view prefix = "sampled:";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto rest = text.substr(prefix.size());
    std::size_t m = 0;
    bool ok = !rest.empty();
    for (char c : rest) {
      if (c < '0' || c > '9') ok = false;
      else m = m * 10 + static_cast<std::size_t>(c - '0');
    }
    if (ok && m >= 1) return sampled(m, seed);
  }
  throw ValidationError(fmt::format("protocol '{}' is not full or sampled:<m> with m >= 1", text));
}

std::string Protocol::to_string() const {
  return kind == Kind::kFull ? std::string("full") : fmt::format("sampled:{}", negatives);
}

bool MetricReport::contains(std::string_view key) const {
  return std::any_of(values.begin(), values.end(), [&](const auto& kv) { return kv.first == key; });
}

double MetricReport::at(std::string_view key) const {
  for (const auto& [k, v] : values) {
    if (k == key) return v;
  }
  throw Error(fmt::format("metric '{}' not in report", key));
}

std::string MetricReport::to_text() const {
  std::string out = fmt::format("protocol\t{}\nseed\t{}\nusers\t{}\n", protocol, seed, users);
  for (const auto& [k, v] : values) out += fmt::format("{}\t{:.6f}\n", k, v);
  return out;
}

Scorer pointwise(std::function<double(Id, Id)> score) {
  return [score = std::move(score)](Id user, std::span<const Id> items, std::span<double> out) {
    for (std::size_t k = 0; k < items.size(); ++k) out[k] = score(user, items[k]);
  };
}

namespace {

std::vector<Id> candidates_for(Id user, const data::UserItems& train, const data::UserItems& test,
                               const Protocol& protocol) {
  const std::size_t n_items = train.n_items();
  std::vector<Id> out;
  if (protocol.kind == Protocol::Kind::kFull) {
    for (Id i = 0; i < n_items; ++i) {
      if (!train.contains(user, i)) out.push_back(i);
    }
    return out;
  }
  const auto& positives = test.items(user);
  out.assign(positives.begin(), positives.end());
  std::vector<Id> pool;
  for (Id i = 0; i < n_items; ++i) {
    if (!train.contains(user, i) && !test.contains(user, i)) pool.push_back(i);
  }
  // Partial Fisher-Yates: m distinct negatives from a per-user stream.
  Rng rng(derive_seed(protocol.seed, user));
  const std::size_t take = std::min(protocol.negatives, pool.size());
  for (std::size_t k = 0; k < take; ++k) {
    const auto j = k + static_cast<std::size_t>(rng.uniform_index(pool.size() - k));
    std::swap(pool[k], pool[j]);
    out.push_back(pool[k]);
  }
  return out;
}

}  // namespace

MetricReport evaluate_ranking(const Scorer& score, const data::UserItems& train, const data::UserItems& test,
                              const RankingEvalOptions& options) {
  if (options.cutoffs.empty()) throw ValidationError("evaluate_ranking: no cutoffs");
  for (auto n : options.cutoffs) {
    if (n < 1) throw ValidationError("evaluate_ranking: cutoffs must be >= 1");
  }
  const std::size_t n_users = test.n_users();
  std::vector<std::optional<UserMetrics>> per_user(n_users);
  std::vector<char> has_test(n_users, 0);

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores;
    for (std::size_t u = begin; u < end; ++u) {
      const auto user = static_cast<Id>(u);
      if (test.items(user).empty()) continue;
      has_test[u] = 1;
      const auto candidates = candidates_for(user, train, test, options.protocol);
      if (candidates.empty()) continue;
      scores.assign(candidates.size(), 0.0);
      score(user, candidates, scores);
      RankingResult result{user, rank_candidates(user, candidates, scores), test.items(user)};
      per_user[u] = ranking_metrics(result, options.cutoffs);
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, n_users));
  if (threads == 1) {
    work(0, n_users);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n_users + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back(work, std::min(n_users, t * chunk), std::min(n_users, (t + 1) * chunk));
    }
    for (auto& th : pool) th.join();
  }

  // Fixed ascending-user summation order.
  const std::size_t nc = options.cutoffs.size();
  std::vector<double> p(nc, 0.0), r(nc, 0.0), g(nc, 0.0);
  double mrr = 0.0;
  std::size_t evaluated = 0, skipped = 0;
  for (std::size_t u = 0; u < n_users; ++u) {
    if (!has_test[u]) continue;
    if (!per_user[u]) {
      ++skipped;
      continue;
    }
    ++evaluated;
    for (std::size_t c = 0; c < nc; ++c) {
      p[c] += per_user[u]->precision[c];
      r[c] += per_user[u]->recall[c];
      g[c] += per_user[u]->ndcg[c];
    }
    mrr += per_user[u]->mrr;
  }

  MetricReport report;
  report.protocol = options.protocol.to_string();
  report.seed = options.protocol.seed;
  report.users = evaluated;
  report.skipped_users = skipped;
  const double denom = evaluated ? static_cast<double>(evaluated) : 1.0;
  for (std::size_t c = 0; c < nc; ++c) {
    const auto n = options.cutoffs[c];
    report.values.emplace_back(fmt::format("precision@{}", n), p[c] / denom);
    report.values.emplace_back(fmt::format("recall@{}", n), r[c] / denom);
    report.values.emplace_back(fmt::format("ndcg@{}", n), g[c] / denom);
  }
  report.values.emplace_back("mrr", mrr / denom);
  return report;
}

MetricReport evaluate_rating(const std::function<double(Id, Id)>& predict, const data::InteractionTable& test) {
  std::vector<std::pair<double, double>> pairs;
  std::set<Id> users;
  pairs.reserve(test.interactions.size());
  for (const auto& rec : test.interactions) {
    const double p = predict(rec.user, rec.item);
    if (!std::isfinite(p)) throw Error(fmt::format("non-finite prediction for user {} item {}", rec.user, rec.item));
    pairs.emplace_back(p, rec.rating);
    users.insert(rec.user);
  }
  const auto errors = rmse_mae(pairs);
  MetricReport report;
  report.protocol = "rating";
  report.users = users.size();
  report.values = {{"rmse", errors.rmse}, {"mae", errors.mae}};
  return report;
}

}  // namespace rectape::metrics
