#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "rectape/data.hpp"
#include "rectape/error.hpp"
#include "text_util.hpp"

namespace rectape::data {

SplitSpec SplitSpec::parse(std::string_view text, std::uint64_t seed) {
  text = detail::trim(text);
  if (text == "loo") return leave_one_out();
  const auto colon = text.find(':');
  if (colon != std::string_view::npos) {
    const auto kind = text.substr(0, colon);
    const auto ratio = detail::parse_double(text.substr(colon + 1));
    if (!ratio || !(*ratio > 0.0 && *ratio < 1.0)) {
      throw ValidationError(fmt::format("split ratio in '{}' must lie in (0, 1)", text));
    }
    if (kind == "random") return random_holdout(*ratio, seed);
    if (kind == "temporal") return temporal(*ratio);
  }
  throw ValidationError(fmt::format("split '{}' is not random:<ratio>, loo or temporal:<ratio>", text));
}

std::string SplitSpec::to_string() const {
  switch (kind) {
    case Kind::kRandomHoldout: return fmt::format("random:{}", ratio);
    case Kind::kLeaveOneOut: return "loo";
    case Kind::kTemporal: return fmt::format("temporal:{}", ratio);
  }
  return "?";
}

namespace {

bool chronologically_before(const Interaction& a, const Interaction& b) {
  return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.order < b.order;
}

std::vector<std::vector<std::size_t>> rows_by_user(const InteractionTable& table) {
  std::vector<std::vector<std::size_t>> rows(table.n_users());
  for (std::size_t i = 0; i < table.interactions.size(); ++i) rows[table.interactions[i].user].push_back(i);
  for (auto& r : rows) {
    std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) {
      return chronologically_before(table.interactions[a], table.interactions[b]);
    });
  }
  return rows;
}

}  // namespace

SplitResult split(const InteractionTable& table, const SplitSpec& spec) {
  if (spec.kind != SplitSpec::Kind::kLeaveOneOut && !(spec.ratio > 0.0 && spec.ratio < 1.0)) {
    throw ValidationError(fmt::format("split ratio {} must lie in (0, 1)", spec.ratio));
  }
  const std::size_t n = table.interactions.size();
  std::vector<char> is_test(n, 0);

  switch (spec.kind) {
    case SplitSpec::Kind::kRandomHoldout: {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      Rng rng(spec.seed);
      rng.shuffle(std::span<std::size_t>(idx));
      const auto n_test = static_cast<std::size_t>(std::llround(spec.ratio * static_cast<double>(n)));
      for (std::size_t i = 0; i < n_test; ++i) is_test[idx[i]] = 1;
      break;
    }
    case SplitSpec::Kind::kLeaveOneOut: {
      for (const auto& rows : rows_by_user(table)) {
        if (rows.size() >= 2) is_test[rows.back()] = 1;
      }
      break;
    }
    case SplitSpec::Kind::kTemporal: {
      for (const auto& rows : rows_by_user(table)) {
        // The small slack keeps e.g. 0.2 * 5 from rounding up to 2.
        const auto n_test = static_cast<std::size_t>(
            std::ceil(spec.ratio * static_cast<double>(rows.size()) - 1e-9));
        for (std::size_t i = rows.size() - std::min(n_test, rows.size()); i < rows.size(); ++i) {
          is_test[rows[i]] = 1;
        }
      }
      break;
    }
  }

  SplitResult result{table.empty_like(), table.empty_like(), 0};
  std::vector<char> user_in_train(table.n_users(), 0), item_in_train(table.n_items(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (is_test[i]) continue;
    const auto& r = table.interactions[i];
    result.train.interactions.push_back(r);
    user_in_train[r.user] = 1;
    item_in_train[r.item] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_test[i]) continue;
    const auto& r = table.interactions[i];
    if (user_in_train[r.user] && item_in_train[r.item]) {
      result.test.interactions.push_back(r);
    } else {
      ++result.dropped_cold;
    }
  }
  if (result.dropped_cold > 0) {
    spdlog::info("split {}: dropped {} cold-start test interactions", spec.to_string(), result.dropped_cold);
  }
  return result;
}

UserItems::UserItems(const InteractionTable& table)
    : UserItems(table.n_users(), table.n_items(), table.interactions) {}

UserItems::UserItems(std::size_t n_users, std::size_t n_items, const std::vector<Interaction>& interactions)
    : items_(n_users), n_items_(n_items) {
  for (const auto& r : interactions) items_.at(r.user).push_back(r.item);
  for (auto& v : items_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

bool UserItems::contains(Id user, Id item) const {
  const auto& v = items_.at(user);
  return std::binary_search(v.begin(), v.end(), item);
}

std::vector<Id> sample_negatives(const InteractionTable& train, Id user, std::size_t k, std::uint64_t seed,
                                 const std::vector<Id>& exclude) {
  if (user >= train.n_users()) throw Error(fmt::format("sample_negatives: user {} out of range", user));
  if (k == 0) return {};
  std::vector<char> blocked(train.n_items(), 0);
  for (const auto& r : train.interactions) {
    if (r.user == user) blocked[r.item] = 1;
  }
  for (Id item : exclude) {
    if (item < blocked.size()) blocked[item] = 1;
  }
  std::vector<Id> candidates;
  for (Id i = 0; i < blocked.size(); ++i) {
    if (!blocked[i]) candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw Error(fmt::format("sample_negatives: user {} has no unconsumed items", train.users.raw(user)));
  }
  Rng rng(seed);
  std::vector<Id> out(k);
  for (auto& v : out) v = candidates[rng.uniform_index(candidates.size())];
  return out;
}

Id NegativeSampler::sample(Id user, Rng& rng) const {
  const auto& owned = consumed_->items(user);
  const std::size_t n_items = consumed_->n_items();
  if (owned.size() >= n_items) throw Error(fmt::format("user {} has consumed every item", user));
  if (owned.size() * 2 <= n_items) {
    while (true) {
      const auto j = static_cast<Id>(rng.uniform_index(n_items));
      if (!std::binary_search(owned.begin(), owned.end(), j)) return j;
    }
  }
  // Dense users: pick the r-th unconsumed item directly.
  auto r = static_cast<Id>(rng.uniform_index(n_items - owned.size()));
  for (Id j : owned) {
    if (j <= r) ++r;
    else break;
  }
  return r;
}

}  // namespace rectape::data
