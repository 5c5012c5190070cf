#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "doctest.h"
#include "rectape/error.hpp"
#include "rectape/grad_check.hpp"
#include "rectape/models/sequential.hpp"
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

ModelSpec spec_for(const std::string& name) {
  ModelSpec s;
  s.name = name;
  s.k = 4;
  s.L = 3;
  s.T = 2;
  s.n_h = 2;
  s.n_v = 2;
  s.alpha = 0.4;
  s.omega = 0.3;
  s.margin = 0.5;
  s.clip_rho = 1.0;
  return s;
}

double max_row_norm(const Tensor& t, std::size_t rows) {
  double worst = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (double v : t.row(r)) s += v * v;
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

bool row_is_zero(const Tensor& t, std::size_t r) {
  const auto row = t.row(r);
  return std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
}

/// Fraction of users whose held-out next item ranks within the top `n` of
/// their unseen items, given the stored training context.
double hit_rate(const std::function<std::vector<double>(Id)>& scores, const rt::MarkovData& d, std::size_t n) {
  const data::UserItems train(d.train);
  std::size_t hits = 0;
  for (Id u = 0; u < d.next_item.size(); ++u) {
    if (rt::rank_among_unseen(scores(u), d.next_item[u], train, u) <= n) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(d.next_item.size());
}

double hit_rate(const Model& m, const rt::MarkovData& d, std::size_t n) {
  return hit_rate([&](Id u) { return rt::all_scores(m, u); }, d, n);
}

}  // namespace

TEST_CASE("prme distance examples") {
  auto m = Prme::create(1, 3, 2, 1.0, 1);
  m->params().assign("P_U", Tensor::matrix({{0, 0}}));
  m->params().assign("P_P", Tensor::matrix({{3, 4}, {0, 0}, {0, 0}}));
  m->params().assign("P_S", Tensor::matrix({{0, 1}, {0, 0}, {0, 0}}));
  CHECK(m->distance(0, 1, 0) == 25.0);

  auto half = Prme::create(1, 3, 2, 0.5, 1);
  half->params() = m->params();
  half->params().put_state("hyper.alpha", Tensor::scalar(0.5));
  CHECK(half->distance(0, 1, 0) == 13.0);

  auto seq = Prme::create(1, 3, 2, 0.0, 1);
  seq->params() = m->params();
  seq->params().put_state("hyper.alpha", Tensor::scalar(0.0));
  const double before = seq->distance(0, 1, 0);
  seq->params().assign("P_U", Tensor::matrix({{7, -2}}));
  CHECK(seq->distance(0, 1, 0) == before);
  // A padding predecessor carries no sequential term.
  CHECK(seq->distance(0, 3, 0) == 0.0);
  CHECK_THROWS_AS(m->distance(1, 0, 0), Error);
  CHECK_THROWS_AS(m->distance(0, 4, 0), Error);
}

TEST_CASE("sequential losses pass the gradient check") {
  for (const std::string name : {"prme", "caser", "attrec"}) {
    for (std::uint64_t trial = 0; trial < 3; ++trial) {
      CAPTURE(name);
      CAPTURE(trial);
      Rng rng(700 + trial);
      const auto table = rt::random_table(4, 7, 18, rng);
      auto spec = spec_for(name);
      if (name == "caser") spec.n_h = 1;
      auto m = create_model(spec, {4, 7, 0}, trial);
      rt::randomize_params(m->params(), rng, 0.5, false);
      const auto loss = rt::first_batch(*m, {&table, nullptr}, opts(0.01, 1, 5, 0.05, 2), trial);
      const auto report = grad_check(m->params(), loss, 1e-4);
      CHECK_MESSAGE(report.passed(), "max rel error ", report.max_error);
    }
  }
}

TEST_CASE("prme with alpha at a boundary trains only the active tables") {
  Rng rng(5);
  const auto table = rt::random_table(4, 6, 16, rng);
  for (double alpha : {0.0, 1.0}) {
    auto m = Prme::create(4, 6, 3, alpha, 2);
    const ParamStore before = m->params();
    m->fit({&table, nullptr}, opts(0.05, 3, 4, 0.01));
    const bool pref_same = m->params().at("P_U") == before.at("P_U") && m->params().at("P_P") == before.at("P_P");
    const bool seq_same = m->params().at("P_S") == before.at("P_S");
    CHECK(pref_same == (alpha == 0.0));
    CHECK(seq_same == (alpha == 1.0));
  }
}

TEST_CASE("caser shapes and the all-padding symmetry") {
  auto m = Caser::create(2, 6, 8, 5, 1, 4, 2, 3);
  CHECK(m->params().at("W_fc").rows() == 4 * 5 + 8 * 2);
  {
    ad::Tape tape;
    const Var sig = tape.constant(Tensor(Shape{5, 8}, 1.0));
    const Var filt = tape.constant(Tensor(Shape{4, 2 * 8}, 1.0));
    CHECK(ad::conv_h(sig, filt, 2).shape() == Shape{4, 4});
  }
  m->params().assign("P", Tensor(Shape{2, 8}));
  const std::vector<Id> pad(5, 6);
  const auto scores = m->forward(0, pad);
  for (double s : scores) CHECK(s == scores.front());
  CHECK_THROWS_AS(m->forward(0, std::vector<Id>(4, 6)), Error);
  CHECK_THROWS_AS(m->forward(0, std::vector<Id>{0, 1, 2, 3, 7}), Error);
}

TEST_CASE("attrec attention examples") {
  auto m = AttRec::create(2, 5, 4, 3, 0.5, 0.5, 1.0, 4);
  Rng rng(8);
  rt::randomize_params(m->params(), rng, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Id> w(3);
    for (auto& id : w) id = static_cast<Id>(rng.uniform_index(6));
    const Tensor A = m->attention(w);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (double v : A.row(r)) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }

  auto one = AttRec::create(1, 4, 3, 1, 0.0, 0.5, 1.0, 2);
  CHECK(one->attention(std::vector<Id>{2}) == Tensor::matrix({{1.0}}));
  // With L = 1 the intent is X[2]: the short-term distance to item 2 is zero.
  CHECK(one->distance(0, std::vector<Id>{2}, 2) == 0.0);
}

TEST_CASE("attrec with omega = 1 ignores the window and hinge examples") {
  auto m = AttRec::create(1, 4, 2, 2, 1.0, 0.5, 1.0, 5);
  const double a = m->distance(0, std::vector<Id>{0, 1}, 2);
  const double b = m->distance(0, std::vector<Id>{3, 4}, 2);
  CHECK(a == b);

  m->params().assign("U", Tensor::matrix({{0, 0}}));
  m->params().assign("V", Tensor::matrix({{std::sqrt(0.2), 0}, {1, 0}, {0, std::sqrt(0.4)}, {0, 0}}));
  const std::vector<std::vector<Id>> win = {{3, 3}};
  auto hinge = [&](Id neg) {
    return evaluate_loss(m->params(),
                         [&](Bindings& bind) { return AttRec::batch_loss(bind, {0}, win, {0}, {neg}, 1.0, 0.5, 0.0); });
  };
  CHECK(hinge(1) == 0.0);
  CHECK(hinge(2) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("prme and attrec distances are never negative") {
  Rng rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    auto p = Prme::create(3, 5, 3, rng.uniform01(), trial);
    auto a = AttRec::create(3, 5, 3, 2, rng.uniform01(), 0.5, 1.0, trial);
    rt::randomize_params(p->params(), rng, 1.0);
    rt::randomize_params(a->params(), rng, 1.0);
    const Id u = static_cast<Id>(rng.uniform_index(3)), i = static_cast<Id>(rng.uniform_index(5));
    CHECK(p->distance(u, static_cast<Id>(rng.uniform_index(6)), i) >= 0.0);
    const std::vector<Id> w = {static_cast<Id>(rng.uniform_index(6)), static_cast<Id>(rng.uniform_index(6))};
    CHECK(a->distance(u, w, i) >= 0.0);
  }
}

TEST_CASE("caser and attrec keep padding rows at zero and attrec clips norms after every step") {
  Rng rng(23);
  const auto table = rt::random_table(5, 8, 30, rng);
  for (const std::string name : {"caser", "attrec"}) {
    CAPTURE(name);
    auto spec = spec_for(name);
    spec.clip_rho = 0.7;
    auto m = create_model(spec, {5, 8, 0}, 3);
    auto o = opts(0.05, 20, 3, 0.0, 2);
    std::size_t steps = 0;
    o.after_step = [&](const Model& model) {
      ++steps;
      const auto& p = model.params();
      const std::string emb = name == "caser" ? "E" : "X";
      REQUIRE(row_is_zero(p.at(emb), 8));
      if (name == "attrec") {
        REQUIRE(max_row_norm(p.at("X"), 9) <= 0.7 + 1e-12);
        REQUIRE(max_row_norm(p.at("U"), 5) <= 0.7 + 1e-12);
        REQUIRE(max_row_norm(p.at("V"), 8) <= 0.7 + 1e-12);
      }
    };
    const auto trace = m->fit({&table, nullptr}, o);
    CHECK(steps == trace.steps);
    CHECK(steps >= 100);
  }
}

TEST_CASE("prme and caser learn planted transitions") {
  Rng rng(29);
  const auto d = rt::planted_markov(30, 12, 8, rng);
  auto prme = Prme::create(30, 12, 8, 0.2, 1);
  prme->fit({&d.train, nullptr}, opts(0.05, 40, 16, 0.0));
  CHECK(hit_rate(*prme, d, 1) >= 0.9);

  auto caser = Caser::create(30, 12, 8, 3, 1, 4, 2, 1);
  caser->fit({&d.train, nullptr}, opts(0.01, 40, 16, 0.0, 2));
  CHECK(hit_rate(*caser, d, 1) >= 0.9);
}

TEST_CASE("attrec beats popularity on planted transitions") {
  Rng rng(37);
  const auto d = rt::planted_markov(30, 20, 8, rng);
  auto m = AttRec::create(30, 20, 8, 3, 0.2, 0.5, 1.0, 1);
  m->fit({&d.train, nullptr}, opts(0.02, 40, 16, 0.0));
  const Popularity pop(d.train);
  const double base = hit_rate(
      [&](Id u) {
        std::vector<double> s(20);
        std::vector<Id> items(20);
        std::iota(items.begin(), items.end(), 0);
        pop.score_items(u, items, s);
        return s;
      },
      d, 5);
  CHECK(hit_rate(*m, d, 5) >= 1.5 * base);
}

TEST_CASE("sequential trainers are bit-reproducible and restore from parameters") {
  Rng rng(41);
  const auto table = rt::random_table(5, 7, 22, rng);
  for (const std::string name : {"prme", "caser", "attrec"}) {
    CAPTURE(name);
    auto a = create_model(spec_for(name), {5, 7, 0}, 6);
    auto b = create_model(spec_for(name), {5, 7, 0}, 6);
    const auto ta = a->fit({&table, nullptr}, opts(0.02, 3, 4, 0.01, 2, 9));
    const auto tb = b->fit({&table, nullptr}, opts(0.02, 3, 4, 0.01, 2, 9));
    CHECK(ta.epoch_loss == tb.epoch_loss);
    const auto r = restore_model(name, a->params());
    for (Id u = 0; u < 5; ++u) {
      const auto sa = rt::all_scores(*a, u), sr = rt::all_scores(*r, u);
      CHECK(sa == sr);
      CHECK(sa == rt::all_scores(*b, u));
    }
  }
}
