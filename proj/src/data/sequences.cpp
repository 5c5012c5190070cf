#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "rectape/data.hpp"
#include "rectape/error.hpp"

namespace rectape::data {

std::vector<std::vector<Id>> user_histories(const InteractionTable& table) {
  std::vector<std::vector<const Interaction*>> by_user(table.n_users());
  for (const auto& r : table.interactions) by_user[r.user].push_back(&r);
  std::vector<std::vector<Id>> out(table.n_users());
  for (std::size_t u = 0; u < by_user.size(); ++u) {
    auto& recs = by_user[u];
    std::stable_sort(recs.begin(), recs.end(), [](const Interaction* a, const Interaction* b) {
      return a->timestamp != b->timestamp ? a->timestamp < b->timestamp : a->order < b->order;
    });
    out[u].reserve(recs.size());
    for (const auto* r : recs) out[u].push_back(r->item);
  }
  return out;
}

std::vector<Id> SequenceDataset::last_window(Id user) const {
  const auto& h = histories.at(user);
  std::vector<Id> w(window, padding_id());
  const std::size_t take = std::min(window, h.size());
  std::copy(h.end() - static_cast<std::ptrdiff_t>(take), h.end(), w.end() - static_cast<std::ptrdiff_t>(take));
  return w;
}

SequenceDataset build_sequences(const InteractionTable& table, std::size_t window, std::size_t horizon) {
  if (window < 1 || horizon < 1) {
    throw ValidationError(fmt::format("sequence window L={} and horizon T={} must both be >= 1", window, horizon));
  }
  SequenceDataset ds;
  ds.window = window;
  ds.horizon = horizon;
  ds.n_users = table.n_users();
  ds.n_items = table.n_items();
  ds.histories = user_histories(table);
  const Id pad = ds.padding_id();
  for (std::size_t u = 0; u < ds.histories.size(); ++u) {
    const auto& h = ds.histories[u];
    // A target needs at least one preceding item.
    for (std::size_t pos = 1; pos < h.size(); ++pos) {
      SequenceInstance inst;
      inst.user = static_cast<Id>(u);
      inst.window.assign(window, pad);
      const std::size_t take = std::min(window, pos);
      std::copy(h.begin() + static_cast<std::ptrdiff_t>(pos - take), h.begin() + static_cast<std::ptrdiff_t>(pos),
                inst.window.end() - static_cast<std::ptrdiff_t>(take));
      const std::size_t end = std::min(h.size(), pos + horizon);
      inst.targets.assign(h.begin() + static_cast<std::ptrdiff_t>(pos), h.begin() + static_cast<std::ptrdiff_t>(end));
      ds.instances.push_back(std::move(inst));
    }
  }
  return ds;
}

}  // namespace rectape::data
