#include "doctest.h"

#include <cmath>
#include <algorithm>
#include <set>

#include "rectape/error.hpp"
#include "rectape/metrics.hpp"
#include "rectape/rng.hpp"
#include "support/metric_oracle.hpp"

using namespace rectape;
using namespace rectape::metrics;

namespace {

data::UserItems user_items(std::size_t n_users, std::size_t n_items, const std::vector<std::set<unsigned>>& sets) {
  std::vector<data::Interaction> rows;
  for (std::size_t u = 0; u < sets.size(); ++u) {
    for (unsigned i : sets[u]) rows.push_back({static_cast<data::Id>(u), i, 1.0, 0, 0});
  }
  return data::UserItems(n_users, n_items, rows);
}

struct RandomInstance {
  std::size_t n_users, n_items;
  std::vector<std::vector<double>> score;
  std::vector<std::set<unsigned>> train, test;
};

RandomInstance random_instance(Rng& rng, std::size_t n_users, std::size_t n_items, bool coarse_scores) {
  RandomInstance inst{n_users, n_items, {}, std::vector<std::set<unsigned>>(n_users),
                      std::vector<std::set<unsigned>>(n_users)};
  inst.score.assign(n_users, std::vector<double>(n_items));
  for (std::size_t u = 0; u < n_users; ++u) {
    for (std::size_t i = 0; i < n_items; ++i) {
      // Coarse scores force plenty of ties.
      inst.score[u][i] = coarse_scores ? static_cast<double>(rng.uniform_index(4)) : rng.normal();
      const double roll = rng.uniform01();
      if (roll < 0.25) inst.train[u].insert(static_cast<unsigned>(i));
      else if (roll < 0.5) inst.test[u].insert(static_cast<unsigned>(i));
    }
  }
  return inst;
}

}  // namespace

TEST_CASE("rmse_mae examples") {
  std::vector<std::pair<double, double>> two{{3, 3}, {4, 2}};
  auto e = rmse_mae(two);
  CHECK(e.rmse == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(e.mae == 1.0);

  std::vector<std::pair<double, double>> perfect{{1, 1}, {2.5, 2.5}};
  e = rmse_mae(perfect);
  CHECK(e.rmse == 0.0);
  CHECK(e.mae == 0.0);

  CHECK_THROWS_AS(rmse_mae({}), Error);
}

TEST_CASE("rmse_mae matches oracle on random pairs") {
  Rng rng(11);
  std::vector<std::pair<double, double>> pairs(100);
  for (auto& p : pairs) p = {rng.normal() * 2 + 3, 1 + static_cast<double>(rng.uniform_index(5))};
  const auto e = rmse_mae(pairs);
  const auto [rmse, mae] = testing::oracle_rmse_mae(pairs);
  CHECK(std::abs(e.rmse - rmse) <= 1e-12);
  CHECK(std::abs(e.mae - mae) <= 1e-12);
  CHECK(e.rmse >= e.mae);
}

TEST_CASE("ranking_metrics examples") {
  const std::vector<std::size_t> ten{10};
  RankingResult r{0, {5, 7, 1, 2, 3}, {7}};
  auto m = ranking_metrics(r, ten);
  REQUIRE(m);
  CHECK(m->ndcg[0] == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
  CHECK(m->ndcg[0] == doctest::Approx(0.63093).epsilon(1e-5));
  CHECK(m->mrr == 0.5);

  const std::vector<std::size_t> five{5};
  RankingResult two_hits{0, {1, 9, 2, 8, 7, 3, 4}, {1, 2, 3, 4}};
  m = ranking_metrics(two_hits, five);
  CHECK(m->precision[0] == 0.4);
  CHECK(m->recall[0] == 0.5);

  RankingResult fourth{0, {9, 8, 7, 1}, {1}};
  CHECK(ranking_metrics(fourth, five)->mrr == 0.25);

  RankingResult none{0, {1, 2}, {}};
  CHECK_FALSE(ranking_metrics(none, five).has_value());

  RankingResult absent{0, {1, 2}, {3}};
  CHECK(ranking_metrics(absent, five)->mrr == 0.0);
}

TEST_CASE("rank_candidates breaks ties by ascending id") {
  const std::vector<data::Id> items{3, 1, 2};
  const std::vector<double> scores{0.1, 0.9, 0.9};
  CHECK(rank_candidates(0, items, scores) == std::vector<data::Id>{1, 2, 3});

  const std::vector<double> bad{0.1, NAN, 0.3};
  CHECK_THROWS_WITH_AS(rank_candidates(4, items, bad), doctest::Contains("user 4 item 1"), Error);
}

TEST_CASE("rank_of") {
  const std::vector<double> scores{0.5, 0.9, 0.5, 0.1};
  CHECK(rank_of(scores, 1) == 1);
  CHECK(rank_of(scores, 0) == 2);
  CHECK(rank_of(scores, 2) == 3);
  CHECK(rank_of(scores, 3) == 4);
}

TEST_CASE("indicator scorer yields perfect metrics") {
  // One test item per user, everything else unobserved.
  const std::vector<std::set<unsigned>> train{{0}, {1}, {2}};
  const std::vector<std::set<unsigned>> test{{3}, {4}, {0}};
  const auto tr = user_items(3, 5, train), te = user_items(3, 5, test);
  auto scorer = pointwise([&](data::Id u, data::Id i) { return test[u].count(i) ? 1.0 : 0.0; });
  RankingEvalOptions opts;
  opts.cutoffs = {1, 3};
  const auto report = evaluate_ranking(scorer, tr, te, opts);
  CHECK(report.at("precision@1") == 1.0);
  CHECK(report.at("recall@1") == 1.0);
  CHECK(report.at("ndcg@1") == 1.0);
  CHECK(report.at("recall@3") == 1.0);
  CHECK(report.at("ndcg@3") == 1.0);
  CHECK(report.at("mrr") == 1.0);
  CHECK(report.users == 3);
}

TEST_CASE("evaluate_ranking full protocol equals brute-force oracle exactly") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_instance(rng, 5, 6, trial % 2 == 0);
    const auto tr = user_items(5, 6, inst.train), te = user_items(5, 6, inst.test);
    const std::vector<std::size_t> cutoffs{1, 3, 5};
    auto scorer = pointwise([&](data::Id u, data::Id i) { return inst.score[u][i]; });
    RankingEvalOptions opts;
    opts.cutoffs = cutoffs;
    const auto report = evaluate_ranking(scorer, tr, te, opts);
    std::size_t users = 0;
    const auto expected = testing::oracle_full_report(inst.score, inst.train, inst.test, cutoffs, &users);
    if (users == 0) continue;
    CHECK(report.users == users);
    for (const auto& [key, value] : expected) {
      INFO(key);
      CHECK(report.at(key) == value);
    }
  }
}

TEST_CASE("metric invariants on random instances") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + rng.uniform_index(20);
    std::vector<data::Id> ranked(n);
    for (std::size_t k = 0; k < n; ++k) ranked[k] = static_cast<data::Id>(k);
    rng.shuffle(std::span<data::Id>(ranked));
    std::vector<data::Id> relevant;
    for (data::Id k = 0; k < n; ++k) {
      if (rng.uniform01() < 0.3) relevant.push_back(k);
    }
    if (relevant.empty()) relevant.push_back(ranked.back());
    const std::vector<std::size_t> cutoffs{1, 2, 5, 10, 50};
    const auto m = ranking_metrics({0, ranked, relevant}, cutoffs);
    REQUIRE(m);
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      CHECK(m->precision[c] * static_cast<double>(cutoffs[c]) ==
            doctest::Approx(m->recall[c] * static_cast<double>(relevant.size())).epsilon(1e-12));
      for (double v : {m->precision[c], m->recall[c], m->ndcg[c]}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-15);
      }
    }
    CHECK(m->mrr >= 0.0);
    CHECK(m->mrr <= 1.0);

    // Relevant items moved to the top give NDCG 1 at every cutoff.
    std::vector<data::Id> ideal = relevant;
    for (auto id : ranked) {
      if (std::find(relevant.begin(), relevant.end(), id) == relevant.end()) ideal.push_back(id);
    }
    const auto best = ranking_metrics({0, ideal, relevant}, cutoffs);
    for (double v : best->ndcg) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("metrics invariant under strictly increasing score transforms") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_instance(rng, 6, 12, trial % 2 == 1);
    const auto tr = user_items(6, 12, inst.train), te = user_items(6, 12, inst.test);
    RankingEvalOptions opts;
    opts.cutoffs = {1, 5};
    const auto base = evaluate_ranking(pointwise([&](data::Id u, data::Id i) { return inst.score[u][i]; }), tr, te, opts);
    const auto shifted = evaluate_ranking(
        pointwise([&](data::Id u, data::Id i) { return std::exp(inst.score[u][i]) * 3.0 + 17.0; }), tr, te, opts);
    CHECK(base.to_text() == shifted.to_text());
  }
}

TEST_CASE("sampled protocol is deterministic and uses distinct unobserved negatives") {
  Rng rng(3);
  auto inst = random_instance(rng, 8, 40, false);
  const auto tr = user_items(8, 40, inst.train), te = user_items(8, 40, inst.test);

  std::vector<std::vector<data::Id>> seen(8);
  auto recording = [&](data::Id u, std::span<const data::Id> items, std::span<double> out) {
    seen[u].assign(items.begin(), items.end());
    for (std::size_t k = 0; k < items.size(); ++k) out[k] = inst.score[u][items[k]];
  };
  RankingEvalOptions opts;
  opts.protocol = Protocol::sampled(5, 99);
  opts.cutoffs = {3};
  const auto a = evaluate_ranking(recording, tr, te, opts);
  const auto first_seen = seen;
  const auto b = evaluate_ranking(recording, tr, te, opts);
  CHECK(a.to_text() == b.to_text());
  CHECK(seen == first_seen);

  for (data::Id u = 0; u < 8; ++u) {
    if (inst.test[u].empty()) continue;
    std::set<data::Id> distinct(seen[u].begin(), seen[u].end());
    CHECK(distinct.size() == seen[u].size());
    std::size_t negatives = 0;
    for (auto i : seen[u]) {
      CHECK_FALSE(inst.train[u].count(i));
      if (!inst.test[u].count(i)) ++negatives;
    }
    const std::size_t pool = 40 - inst.train[u].size() - inst.test[u].size();
    CHECK(negatives == std::min<std::size_t>(5, pool));
  }

  opts.protocol = Protocol::sampled(5, 100);
  evaluate_ranking(recording, tr, te, opts);
  CHECK(seen != first_seen);
}

TEST_CASE("report is independent of thread count") {
  Rng rng(8);
  auto inst = random_instance(rng, 40, 30, true);
  const auto tr = user_items(40, 30, inst.train), te = user_items(40, 30, inst.test);
  RankingEvalOptions opts;
  opts.cutoffs = {1, 5, 10};
  auto scorer = pointwise([&](data::Id u, data::Id i) { return inst.score[u][i]; });
  const auto one = evaluate_ranking(scorer, tr, te, opts);
  opts.threads = 4;
  const auto four = evaluate_ranking(scorer, tr, te, opts);
  CHECK(one.to_text() == four.to_text());
}

TEST_CASE("non-finite scores are rejected with the user and item") {
  const auto tr = user_items(1, 3, {{0}}), te = user_items(1, 3, {{1}});
  auto scorer = pointwise([](data::Id, data::Id i) { return i == 2 ? INFINITY : 0.0; });
  CHECK_THROWS_WITH_AS(evaluate_ranking(scorer, tr, te, {}), doctest::Contains("user 0 item 2"), Error);
}

TEST_CASE("protocol parsing") {
  CHECK(Protocol::parse("full", 1).kind == Protocol::Kind::kFull);
  const auto s = Protocol::parse("sampled:100", 7);
  CHECK(s.kind == Protocol::Kind::kSampled);
  CHECK(s.negatives == 100);
  CHECK(s.seed == 7);
  CHECK(s.to_string() == "sampled:100");
  CHECK_THROWS_AS(Protocol::parse("sampled:", 1), ValidationError);
  CHECK_THROWS_AS(Protocol::parse("sampled:0", 1), ValidationError);
  CHECK_THROWS_AS(Protocol::parse("sample:5", 1), ValidationError);
}

TEST_CASE("report text format") {
  MetricReport r;
  r.protocol = "full";
  r.seed = 42;
  r.users = 3;
  r.values = {{"precision@5", 0.4}, {"mrr", 1.0 / 3.0}};
  CHECK(r.to_text() == "protocol\tfull\nseed\t42\nusers\t3\nprecision@5\t0.400000\nmrr\t0.333333\n");
  CHECK(r.contains("mrr"));
  CHECK_FALSE(r.contains("ndcg@5"));
  CHECK_THROWS_AS(r.at("ndcg@5"), Error);
}

TEST_CASE("evaluate_rating reports rmse and mae") {
  data::InteractionTable test;
  test.users.intern("a");
  test.items.intern("x");
  test.items.intern("y");
  test.interactions = {{0, 0, 4.0, 0, 0}, {0, 1, 2.0, 1, 1}};
  const auto r = evaluate_rating([](data::Id, data::Id) { return 3.0; }, test);
  CHECK(r.values.size() == 2);
  CHECK(r.at("rmse") == 1.0);
  CHECK(r.at("mae") == 1.0);
  CHECK(r.users == 1);
}
