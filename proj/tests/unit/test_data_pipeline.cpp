#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "rectape/data.hpp"
#include "rectape/error.hpp"

using namespace rectape;
using namespace rectape::data;

namespace {

InteractionTable table_from(const std::string& text, LoadOptions options = {}) {
  std::istringstream in(text);
  return read_interactions(in, options);
}

std::vector<SparseRow> libfm_from(const std::string& text) {
  std::istringstream in(text);
  return read_libfm(in);
}

/// Random table with every user having at least `min_per_user` interactions.
InteractionTable random_table(Rng& rng, std::size_t users, std::size_t items, std::size_t min_per_user) {
  std::ostringstream text;
  std::size_t t = 0;
  for (std::size_t u = 0; u < users; ++u) {
    const std::size_t count = min_per_user + rng.uniform_index(4);
    for (std::size_t c = 0; c < count; ++c) {
      text << "u" << u << " i" << rng.uniform_index(items) << " " << 1 + rng.uniform_index(5) << " "
           << (t++ * 7) % 97 << "\n";
    }
  }
  return table_from(text.str());
}

}  // namespace

TEST_CASE("load_interactions remaps ids densely") {
  auto t = table_from("u1 i9 5 10\nu2 i9 3 20\n");
  CHECK(t.n_users() == 2);
  CHECK(t.n_items() == 1);
  CHECK(t.items.find("i9") == Id{0});
  CHECK(t.interactions.size() == 2);
  CHECK(t.interactions[1].user == 1);
}

TEST_CASE("duplicates keep the latest timestamp") {
  auto t = table_from("u1 i9 2 10\nu1 i9 4 30\nu1 i9 1 20\n");
  REQUIRE(t.interactions.size() == 1);
  CHECK(t.interactions[0].rating == 4.0);
  CHECK(t.interactions[0].timestamp == 30);
}

TEST_CASE("missing timestamps default to line order") {
  auto t = table_from("a x 1\nb y 2\nc z 3\n");
  REQUIRE(t.interactions.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(t.interactions[i].timestamp == static_cast<std::int64_t>(i));
}

TEST_CASE("separators and headers") {
  auto tab = table_from("user\titem\trating\n1\t2\t3.5\n", {std::nullopt, true});
  CHECK(tab.interactions.size() == 1);
  CHECK(tab.interactions[0].rating == 3.5);
  auto csv = table_from("1,2,4,100\n1,3,5,101\n");
  CHECK(csv.n_items() == 2);
  auto forced = table_from("1;2;4\n", {';', false});
  CHECK(forced.interactions.size() == 1);
}

TEST_CASE("malformed input reports the line") {
  try {
    table_from("u1 i1 5\n\nu2 i2\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(table_from("u1 i1 five\n"), ParseError);
  CHECK_THROWS_AS(table_from(""), ParseError);
  CHECK_THROWS_AS(load_interactions("/nonexistent/file.txt"), Error);
}

TEST_CASE("id remapping round-trips") {
  Rng rng(4);
  auto t = random_table(rng, 30, 40, 1);
  for (Id u = 0; u < t.n_users(); ++u) CHECK(t.users.find(t.users.raw(u)) == u);
  for (Id i = 0; i < t.n_items(); ++i) CHECK(t.items.find(t.items.raw(i)) == i);
  for (const auto& r : t.interactions) {
    CHECK(r.user < t.n_users());
    CHECK(r.item < t.n_items());
  }
}

TEST_CASE("parse_libfm") {
  auto rows = libfm_from("5 0:1 3:2.5\n0\n1 7:1 2:3\n");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].label == 5.0);
  CHECK(rows[0].features == std::vector<std::pair<std::uint32_t, double>>{{0, 1.0}, {3, 2.5}});
  CHECK(rows[1].features.empty());
  CHECK(rows[2].features.front().first == 2);
  CHECK(feature_count(rows) == 8);

  auto line_of = [](const std::string& text) {
    try {
      libfm_from(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of("1 0:1\n1 3:1 3:2\n") == 2);
  CHECK(line_of("1 -1:1\n") == 1);
  CHECK(line_of("x 1:1\n") == 1);
  CHECK(line_of("1 1:y\n") == 1);
  CHECK(line_of("1 1\n") == 1);
}

TEST_CASE("leave-one-out split") {
  auto t = table_from("u a 1 1\nu b 1 2\nu c 1 3\nv c 1 5\n");
  auto s = split(t, SplitSpec::leave_one_out());
  REQUIRE(s.test.interactions.size() == 1);
  CHECK(s.test.items.raw(s.test.interactions[0].item) == "c");
  CHECK(s.train.interactions.size() == 3);
  // v has a single interaction and stays in train.
  CHECK(std::any_of(s.train.interactions.begin(), s.train.interactions.end(),
                    [&](const Interaction& r) { return t.users.raw(r.user) == "v"; }));
}

TEST_CASE("random holdout is deterministic and temporal takes the tail") {
  Rng rng(9);
  auto t = random_table(rng, 40, 30, 3);
  auto a = split(t, SplitSpec::random_holdout(0.2, 7));
  auto b = split(t, SplitSpec::random_holdout(0.2, 7));
  CHECK(a.train.interactions == b.train.interactions);
  CHECK(a.test.interactions == b.test.interactions);

  auto tmp = table_from("u a 1 5\nu b 1 1\nu c 1 3\nu d 1 4\nu e 1 2\nw a 1 1\nw b 1 2\n");
  auto s = split(tmp, SplitSpec::temporal(0.2));
  // ceil(0.2*5) = 1 for u (item a, t=5); ceil(0.2*2) = 1 for w (item b).
  REQUIRE(s.test.interactions.size() == 2);
  CHECK(tmp.items.raw(s.test.interactions[0].item) == "a");
  CHECK(tmp.items.raw(s.test.interactions[1].item) == "b");

  CHECK_THROWS_AS(split(t, SplitSpec::random_holdout(1.0, 1)), ValidationError);
  CHECK_THROWS_AS(SplitSpec::parse("temporal:0", 1), ValidationError);
  CHECK_THROWS_AS(SplitSpec::parse("kfold:3", 1), ValidationError);
  CHECK(SplitSpec::parse("random:0.1", 5).seed == 5);
}

TEST_CASE("splits partition the data") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = random_table(rng, 15 + rng.uniform_index(20), 10 + rng.uniform_index(30), 1 + rng.uniform_index(3));
    for (const auto& spec : {SplitSpec::random_holdout(0.3, rng.next_u64()), SplitSpec::leave_one_out(),
                             SplitSpec::temporal(0.25)}) {
      auto s = split(t, spec);
      std::multiset<std::size_t> seen;
      for (const auto& r : s.train.interactions) seen.insert(r.order);
      for (const auto& r : s.test.interactions) {
        CHECK(seen.count(r.order) == 0);
        seen.insert(r.order);
      }
      CHECK(seen.size() + s.dropped_cold == t.interactions.size());
      std::set<Id> train_users, train_items;
      for (const auto& r : s.train.interactions) {
        train_users.insert(r.user);
        train_items.insert(r.item);
      }
      for (const auto& r : s.test.interactions) {
        CHECK(train_users.count(r.user) == 1);
        CHECK(train_items.count(r.item) == 1);
      }
      if (spec.kind == SplitSpec::Kind::kLeaveOneOut) {
        std::map<Id, int> per_user;
        for (const auto& r : s.test.interactions) ++per_user[r.user];
        for (const auto& [u, c] : per_user) CHECK(c == 1);
      }
    }
  }
}

TEST_CASE("sample_negatives") {
  auto t = table_from("u 1 1\nu 2 1\nv 0 1\nv 3 1\nv 4 1\n");
  const Id u = *t.users.find("u");
  const Id i1 = *t.items.find("1"), i2 = *t.items.find("2");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (Id j : sample_negatives(t, u, 10, seed)) {
      CHECK(j != i1);
      CHECK(j != i2);
    }
  }
  CHECK(sample_negatives(t, u, 0, 1).empty());
  CHECK(sample_negatives(t, u, 5, 3) == sample_negatives(t, u, 5, 3));

  // Three candidates left; frequencies should each be 1/3.
  std::map<Id, int> counts;
  for (Id j : sample_negatives(t, u, 30000, 77)) ++counts[j];
  REQUIRE(counts.size() == 3);
  for (const auto& [j, c] : counts) CHECK(std::abs(c / 30000.0 - 1.0 / 3.0) <= 0.02);

  auto full = table_from("u a 1\nu b 1\n");
  CHECK_THROWS_AS(sample_negatives(full, 0, 1, 1), Error);
  CHECK(sample_negatives(full, 0, 0, 1).empty());
}

TEST_CASE("NegativeSampler is uniform over unconsumed items") {
  auto t = table_from("u 0 1\nu 1 1\nu 2 1\nu 3 1\nv 4 1\nu 5 1\n");
  UserItems consumed(t);
  NegativeSampler sampler(consumed);
  const Id u = *t.users.find("u");
  Rng rng(5);
  std::map<Id, int> counts;
  for (int i = 0; i < 30000; ++i) ++counts[sampler.sample(u, rng)];
  REQUIRE(counts.size() == 1);
  CHECK(counts.begin()->first == *t.items.find("4"));

  auto sparse = table_from("u 0 1\nv 1 1\nv 2 1\nv 3 1\n");
  UserItems c2(sparse);
  NegativeSampler s2(c2);
  std::map<Id, int> freq;
  for (int i = 0; i < 30000; ++i) ++freq[s2.sample(0, rng)];
  REQUIRE(freq.size() == 3);
  for (const auto& [j, c] : freq) CHECK(std::abs(c / 30000.0 - 1.0 / 3.0) <= 0.02);
}

TEST_CASE("build_sequences") {
  auto t = table_from("u a 1 1\nu b 1 2\nu c 1 3\nsolo x 1 1\nw a 1 1\nw b 1 2\nw c 1 3\nw d 1 4\n");
  const Id a = *t.items.find("a"), b = *t.items.find("b"), c = *t.items.find("c"), d = *t.items.find("d");
  const Id u = *t.users.find("u"), w = *t.users.find("w");

  auto ds = build_sequences(t, 2, 1);
  const Id pad = ds.padding_id();
  CHECK(pad == t.n_items());
  std::vector<SequenceInstance> of_u;
  for (const auto& inst : ds.instances) {
    if (inst.user == u) of_u.push_back(inst);
    CHECK(t.users.raw(inst.user) != "solo");
  }
  REQUIRE(of_u.size() == 2);
  CHECK(of_u[0].window == std::vector<Id>{pad, a});
  CHECK(of_u[0].targets == std::vector<Id>{b});
  CHECK(of_u[1].window == std::vector<Id>{a, b});
  CHECK(of_u[1].targets == std::vector<Id>{c});

  auto ds3 = build_sequences(t, 3, 2);
  const auto& last = *std::find_if(ds3.instances.rbegin(), ds3.instances.rend(),
                                   [&](const SequenceInstance& i) { return i.user == w; });
  CHECK(last.window == std::vector<Id>{a, b, c});
  CHECK(last.targets == std::vector<Id>{d});
  CHECK(ds3.last_window(u) == std::vector<Id>{a, b, c});
  CHECK(ds3.last_window(*t.users.find("solo")) == std::vector<Id>{ds3.padding_id(), ds3.padding_id(), *t.items.find("x")});

  CHECK_THROWS_AS(build_sequences(t, 0, 1), ValidationError);
  CHECK_THROWS_AS(build_sequences(t, 1, 0), ValidationError);
}

TEST_CASE("binarize keeps the id space") {
  auto t = table_from("u a 5\nu b 2\nv a 4\n");
  auto b = binarize(t, 4.0);
  CHECK(b.interactions.size() == 2);
  CHECK(b.n_items() == 2);
}
