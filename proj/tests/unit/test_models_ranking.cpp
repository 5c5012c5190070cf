#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "rectape/error.hpp"
#include "rectape/grad_check.hpp"
#include "rectape/metrics.hpp"
#include "rectape/models/ranking.hpp"
#include "support/fd_oracle.hpp"
#include "support/model_fixtures.hpp"

using namespace rectape;
using namespace rectape::models;
namespace rt = rectape::testing;
using ad::Var;

namespace {

TrainOptions opts(double lr, std::size_t epochs, std::size_t batch, double l2 = 0.0, std::size_t negs = 1,
                  std::uint64_t seed = 1) {
  TrainOptions o;
  o.optimizer = OptimizerState::adam(lr);
  o.epochs = epochs;
  o.batch_size = batch;
  o.l2 = l2;
  o.neg_samples = negs;
  o.seed = seed;
  return o;
}

std::unique_ptr<Model> make(const std::string& name, std::size_t nu, std::size_t ni, std::size_t k,
                            std::uint64_t seed, double q = 0.0) {
  ModelSpec spec;
  spec.name = name;
  spec.k = k;
  spec.dropout_q = q;
  return create_model(spec, {nu, ni, 0}, seed);
}

double max_row_norm(const Tensor& t) {
  double worst = 0.0;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double s = 0.0;
    for (double v : t.row(r)) s += v * v;
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

double relu(double x) { return x > 0 ? x : 0.0; }
double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("bpr loss examples") {
  ad::Tape tape;
  const Var pu = tape.leaf(Tensor::matrix({{1.0, 0.0}}));
  const Var qi = tape.leaf(Tensor::matrix({{0.3, 0.2}}));
  const Var qj = tape.leaf(Tensor::matrix({{0.3, 0.7}}));
  const Var loss = BprMf::bpr_loss(pu, qi, qj, 0.0);
  CHECK(loss.value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // d loss / d qi = dloss/dx * pu with dloss/dx = -sigmoid(-x) = -0.5 at x = 0.
  const auto g = tape.backward(loss)[qi];
  CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(g[1] == 0.0);
}

TEST_CASE("bpr difference is unchanged by a common score shift") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    ad::Tape tape;
    const Tensor p = rt::random_tensor(Shape{1, 3}, rng), a = rt::random_tensor(Shape{1, 3}, rng),
                 b = rt::random_tensor(Shape{1, 3}, rng);
    // Shifting both items along pu by t adds t|pu|^2 to both scores.
    const double t = rng.normal();
    Tensor a2 = a, b2 = b;
    for (std::size_t f = 0; f < 3; ++f) {
      a2[f] += t * p[f];
      b2[f] += t * p[f];
    }
    const double l1 = BprMf::bpr_loss(tape.constant(p), tape.constant(a), tape.constant(b), 0.0).value().item();
    const double l2 = BprMf::bpr_loss(tape.constant(p), tape.constant(a2), tape.constant(b2), 0.0).value().item();
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  }
}

TEST_CASE("cml hinge examples") {
  ad::Tape tape;
  const Var u = tape.constant(Tensor::matrix({{0.0, 0.0}}));
  const Var vi = tape.constant(Tensor::matrix({{std::sqrt(0.2), 0.0}}));
  const Var far = tape.constant(Tensor::matrix({{1.0, 0.0}}));
  const Var near = tape.constant(Tensor::matrix({{0.0, std::sqrt(0.4)}}));
  CHECK(Cml::hinge_loss(u, vi, std::vector<Var>{far}, 0.5).value().item() == 0.0);
  CHECK(Cml::hinge_loss(u, vi, std::vector<Var>{near}, 0.5).value().item() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(Cml::hinge_loss(u, vi, std::vector<Var>{far, near}, 0.5).value().item() ==
        doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("ranking losses pass the gradient check") {
  for (const std::string name : {"bprmf", "cml", "gmf", "mlp", "neumf", "cdae"}) {
    for (std::uint64_t trial = 0; trial < 3; ++trial) {
      CAPTURE(name);
      CAPTURE(trial);
      Rng rng(500 + trial);
      const auto table = rt::random_table(5, 7, 16, rng);
      auto m = make(name, 5, 7, 4, trial, name == "cdae" ? 0.3 : 0.0);
      rt::randomize_params(m->params(), rng, 0.5);
      const auto loss = rt::first_batch(*m, {&table, nullptr}, opts(0.01, 1, 6, 0.05, 2), trial);
      const auto report = grad_check(m->params(), loss, 1e-4);
      CHECK_MESSAGE(report.passed(), "max rel error ", report.max_error);
    }
  }
}

TEST_CASE("cml keeps every row in the unit ball after every step") {
  Rng rng(9);
  const auto table = rt::random_table(6, 9, 30, rng);
  auto m = Cml::create(6, 9, 3, 0.5, 2);
  rt::randomize_params(m->params(), rng, 2.0);
  auto o = opts(0.1, 20, 4, 0.0, 3);
  std::size_t checks = 0;
  o.after_step = [&](const Model& model) {
    ++checks;
    REQUIRE(max_row_norm(model.params().at("U")) <= 1.0 + 1e-12);
    REQUIRE(max_row_norm(model.params().at("V")) <= 1.0 + 1e-12);
  };
  const auto trace = m->fit({&table, nullptr}, o);
  CHECK(checks == trace.steps);
  CHECK(checks > 0);
}

TEST_CASE("cml with zero margin separates a toy set completely") {
  // Two users with disjoint tastes.
  const auto table =
      rt::make_table(2, 4, {{0, 0, 1.0, 0}, {0, 1, 1.0, 1}, {1, 2, 1.0, 2}, {1, 3, 1.0, 3}});
  auto m = Cml::create(2, 4, 2, 0.0, 3);
  const auto trace = m->fit({&table, nullptr}, opts(0.05, 200, 4, 0.0, 2));
  CHECK(trace.epoch_loss.back() == 0.0);
}

TEST_CASE("gmf with unit output weights is sigmoid matrix factorization") {
  auto m = NeuMf::create(NcfVariant::kGmf, 3, 3, 2, {}, 5);
  m->params().assign("h", Tensor(Shape{2, 1}, 1.0));
  const auto& P = m->params().at("P_g");
  const auto& Q = m->params().at("Q_g");
  for (Id u = 0; u < 3; ++u) {
    for (Id i = 0; i < 3; ++i) {
      const double dot = P.at(u, 0) * Q.at(i, 0) + P.at(u, 1) * Q.at(i, 1);
      CHECK(m->score(u, i) == doctest::Approx(sigm(dot)).epsilon(1e-12));
    }
  }
}

TEST_CASE("ncf all-zero parameters score one half") {
  for (auto v : {NcfVariant::kGmf, NcfVariant::kMlp, NcfVariant::kNeuMf}) {
    auto m = NeuMf::create(v, 2, 3, 4, {}, 1);
    for (auto& e : m->params().entries()) {
      if (e.trainable) m->params().assign(e.name, Tensor(e.value.shape()));
    }
    for (Id u = 0; u < 2; ++u) {
      for (Id i = 0; i < 3; ++i) CHECK(m->score(u, i) == 0.5);
    }
  }
}

TEST_CASE("neumf score equals hand-composed sub-networks") {
  Rng rng(12);
  auto m = NeuMf::create(NcfVariant::kNeuMf, 2, 2, 4, {4, 3, 2}, 6);
  rt::randomize_params(m->params(), rng, 0.7);
  const auto& p = m->params();
  for (Id u = 0; u < 2; ++u) {
    for (Id i = 0; i < 2; ++i) {
      std::vector<double> feat;
      for (std::size_t f = 0; f < 4; ++f) feat.push_back(p.at("P_g").at(u, f) * p.at("Q_g").at(i, f));
      std::vector<double> x = {p.at("P_m").at(u, 0), p.at("P_m").at(u, 1), p.at("Q_m").at(i, 0), p.at("Q_m").at(i, 1)};
      for (const auto& [w, b] : {std::pair{"W1", "b1"}, std::pair{"W2", "b2"}}) {
        const auto& W = p.at(w);
        std::vector<double> y(W.cols());
        for (std::size_t o = 0; o < W.cols(); ++o) {
          double s = p.at(b)[o];
          for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * W.at(k, o);
          y[o] = relu(s);
        }
        x = y;
      }
      feat.insert(feat.end(), x.begin(), x.end());
      double z = p.at("b_out").item();
      for (std::size_t f = 0; f < feat.size(); ++f) z += feat[f] * p.at("h")[f];
      CHECK(m->score(u, i) == doctest::Approx(sigm(z)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gmf through the registry matches the direct constructor") {
  Rng rng(14);
  const auto table = rt::random_table(5, 6, 14, rng);
  auto a = make("gmf", 5, 6, 4, 21);
  auto b = NeuMf::create(NcfVariant::kGmf, 5, 6, 4, {}, 21);
  const auto ta = a->fit({&table, nullptr}, opts(0.01, 5, 4, 0.0, 4));
  const auto tb = b->fit({&table, nullptr}, opts(0.01, 5, 4, 0.0, 4));
  CHECK(ta.epoch_loss == tb.epoch_loss);
  CHECK(a->name() == "gmf");
}

TEST_CASE("cdae zero parameters and the q = 0 boundary") {
  auto m = Cdae::create(2, 3, 4, 0.0, 1);
  for (auto& e : m->params().entries()) {
    if (e.trainable) m->params().assign(e.name, Tensor(e.value.shape()));
  }
  for (double s : m->forward(0, std::vector<double>{1, 0, 1})) CHECK(s == 0.5);
  CHECK_THROWS_AS(m->forward(0, std::vector<double>{1, 0}), Error);

  Rng rng(2);
  m = Cdae::create(2, 3, 4, 0.0, 1);
  rt::randomize_params(m->params(), rng, 0.5);
  const Tensor y = Tensor::matrix({{1, 0, 1}, {0, 1, 0}});
  const Tensor w = Tensor::matrix({{1, 1, 1}, {1, 2, 1}});
  auto loss = [&](double q, std::uint64_t seed) {
    return evaluate_loss(m->params(), [&](Bindings& b) { return Cdae::batch_loss(b, {0, 1}, y, w, q, seed, 0.0, 1.0); });
  };
  CHECK(loss(0.0, 1) == loss(0.0, 99));
  bool differs = false;
  for (std::uint64_t seed = 2; seed < 10; ++seed) differs = differs || loss(0.5, 1) != loss(0.5, seed);
  CHECK(differs);
}

TEST_CASE("cdae with q = 0 ranks a single user's own items on top") {
  const auto table = rt::make_table(1, 8, {{0, 1, 1.0, 0}, {0, 4, 1.0, 1}, {0, 6, 1.0, 2}});
  auto m = Cdae::create(1, 8, 4, 0.0, 3);
  m->fit({&table, nullptr}, opts(0.05, 200, 1, 0.0, 2));
  auto scores = rt::all_scores(*m, 0);
  for (Id i : {1u, 4u, 6u}) CHECK(rt::rank_among_all(scores, i) <= 3);
}

TEST_CASE("bprmf recovers planted block preferences") {
  Rng rng(31);
  const auto blocks = rt::planted_blocks(20, 20, 0.5, rng);
  auto m = BprMf::create(20, 20, 4, 2);
  m->fit({&blocks.train, nullptr}, opts(0.05, 30, 16, 0.05));
  CHECK(rt::pairwise_auc(*m, blocks) >= 0.95);
}

TEST_CASE("cml reaches most of the oracle recall on planted clusters") {
  Rng rng(32);
  const auto blocks = rt::planted_blocks(20, 30, 0.5, rng);
  auto m = Cml::create(20, 30, 2, 1.0, 2);
  m->fit({&blocks.train, nullptr}, opts(0.01, 20, 16, 0.0, 4));
  const data::UserItems train(blocks.train);
  const auto test = rt::user_items(20, 30, blocks.held_out_pos);
  metrics::RankingEvalOptions eo;
  eo.cutoffs = {5};
  const auto model = metrics::evaluate_ranking(rt::scorer_of(*m), train, test, eo);
  const auto oracle = metrics::evaluate_ranking(
      metrics::pointwise([](Id u, Id i) { return u % 2 == i % 2 ? 1.0 : 0.0; }), train, test, eo);
  CHECK(model.at("recall@5") >= 0.8 * oracle.at("recall@5"));
}

TEST_CASE("cdae beats popularity on planted clusters") {
  Rng rng(33);
  const auto blocks = rt::planted_blocks(20, 30, 0.5, rng);
  auto m = Cdae::create(20, 30, 8, 0.2, 2);
  m->fit({&blocks.train, nullptr}, opts(0.02, 100, 8, 0.0, 2));
  const data::UserItems train(blocks.train);
  const auto test = rt::user_items(20, 30, blocks.held_out_pos);
  const Popularity pop(blocks.train);
  metrics::RankingEvalOptions eo;
  const auto model = metrics::evaluate_ranking(rt::scorer_of(*m), train, test, eo);
  const auto base = metrics::evaluate_ranking(
      [&](Id u, std::span<const Id> items, std::span<double> out) { pop.score_items(u, items, out); }, train, test,
      eo);
  CHECK(model.at("ndcg@10") >= 1.2 * base.at("ndcg@10"));
}

TEST_CASE("bprmf ranking is invariant to a per-user score shift and reproducible") {
  Rng rng(40);
  const auto blocks = rt::planted_blocks(10, 12, 0.5, rng);
  auto run = [&] {
    auto m = BprMf::create(10, 12, 3, 7);
    m->fit({&blocks.train, nullptr}, opts(0.05, 10, 8));
    return m;
  };
  auto m = run();
  const data::UserItems train(blocks.train);
  const auto test = rt::user_items(10, 12, blocks.held_out_pos);
  metrics::RankingEvalOptions eo;
  const auto base = metrics::evaluate_ranking(rt::scorer_of(*m), train, test, eo);
  const auto shifted = metrics::evaluate_ranking(
      metrics::pointwise([&](Id u, Id i) { return m->score(u, i) + 3.0 * u + 1.0; }), train, test, eo);
  CHECK(base.at("ndcg@10") == shifted.at("ndcg@10"));
  const auto again = metrics::evaluate_ranking(rt::scorer_of(*run()), train, test, eo);
  CHECK(base.to_text() == again.to_text());
  eo.threads = 4;
  CHECK(metrics::evaluate_ranking(rt::scorer_of(*m), train, test, eo).to_text() == base.to_text());
}

TEST_CASE("ranking scores stay finite and full-consumption users are skipped") {
  // User 0 consumed every item.
  std::vector<std::tuple<Id, Id, double, std::int64_t>> rows;
  for (Id i = 0; i < 5; ++i) rows.emplace_back(0, i, 1.0, i);
  rows.emplace_back(1, 2, 1.0, 9);
  rows.emplace_back(2, 4, 1.0, 10);
  const auto table = rt::make_table(3, 5, rows);
  for (const std::string name : {"bprmf", "cml", "gmf", "mlp", "neumf", "cdae"}) {
    CAPTURE(name);
    auto m = make(name, 3, 5, 4, 1);
    auto o = opts(0.05, 5, 2, 0.01, 2);
    o.after_step = [](const Model& model) {
      for (Id u = 0; u < model.n_users(); ++u) {
        for (Id i = 0; i < model.n_items(); ++i) REQUIRE(std::isfinite(model.score(u, i)));
      }
    };
    const auto trace = m->fit({&table, nullptr}, o);
    CHECK(trace.skipped_users == 1);
  }
}

TEST_CASE("ranking trainers are bit-reproducible") {
  Rng rng(41);
  const auto table = rt::random_table(6, 8, 20, rng);
  for (const std::string name : {"bprmf", "cml", "gmf", "mlp", "neumf", "cdae"}) {
    CAPTURE(name);
    auto a = make(name, 6, 8, 4, 3, 0.2);
    auto b = make(name, 6, 8, 4, 3, 0.2);
    const auto ta = a->fit({&table, nullptr}, opts(0.01, 3, 4, 0.01, 2, 5));
    const auto tb = b->fit({&table, nullptr}, opts(0.01, 3, 4, 0.01, 2, 5));
    CHECK(ta.epoch_loss == tb.epoch_loss);
    CHECK(a->score(1, 3) == b->score(1, 3));
  }
}
