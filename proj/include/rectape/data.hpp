#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rectape/rng.hpp"

namespace rectape::data {

using Id = std::uint32_t;

/// One (user, item) observation with dense ids.
struct Interaction {
  Id user = 0;
  Id item = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;
  /// Position of the source line among data lines; breaks timestamp ties.
  std::size_t order = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Bijection between raw string ids and dense ids assigned in first-seen order.
class IdMap {
 public:
  Id intern(std::string_view raw);
  std::optional<Id> find(std::string_view raw) const;
  const std::string& raw(Id dense) const { return raw_.at(dense); }
  std::size_t size() const { return raw_.size(); }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, Id> dense_;
};

struct InteractionTable {
  std::vector<Interaction> interactions;
  IdMap users;
  IdMap items;

  std::size_t n_users() const { return users.size(); }
  std::size_t n_items() const { return items.size(); }
  /// Same id space, no interactions.
  InteractionTable empty_like() const;
};

struct LoadOptions {
  /// Field separator; auto-detected among tab, comma and whitespace when empty.
  std::optional<char> separator;
  bool has_header = false;
};

/// Reads "user item rating [timestamp]" lines. Duplicate (user, item) pairs
/// keep the record with the latest timestamp (later line on ties). Missing
/// timestamps default to the data-line ordinal.
InteractionTable load_interactions(const std::string& path, const LoadOptions& options = {});
InteractionTable read_interactions(std::istream& in, const LoadOptions& options,
                                   const std::string& source = "<stream>");

/// Writes raw ids as "user<TAB>item<TAB>rating<TAB>timestamp" lines.
void write_interactions(const std::string& path, const InteractionTable& table);

/// Keeps interactions with rating >= threshold; the id space is unchanged.
InteractionTable binarize(const InteractionTable& table, double threshold);

/// libfm-format sample: label followed by sparse index:value pairs.
struct SparseRow {
  double label = 0.0;
  std::vector<std::pair<std::uint32_t, double>> features;
};

std::vector<SparseRow> parse_libfm(const std::string& path);
std::vector<SparseRow> read_libfm(std::istream& in, const std::string& source = "<stream>");
/// One plus the largest feature index (0 for featureless data).
std::size_t feature_count(const std::vector<SparseRow>& rows);

struct SplitSpec {
  enum class Kind { kRandomHoldout, kLeaveOneOut, kTemporal };
  Kind kind = Kind::kRandomHoldout;
  double ratio = 0.2;
  std::uint64_t seed = 0;

  static SplitSpec random_holdout(double ratio, std::uint64_t seed) { return {Kind::kRandomHoldout, ratio, seed}; }
  static SplitSpec leave_one_out() { return {Kind::kLeaveOneOut, 0.0, 0}; }
  static SplitSpec temporal(double ratio) { return {Kind::kTemporal, ratio, 0}; }

  /// Parses "random:<ratio>", "loo" or "temporal:<ratio>".
  static SplitSpec parse(std::string_view text, std::uint64_t seed);
  std::string to_string() const;
};

struct SplitResult {
  InteractionTable train;
  InteractionTable test;
  /// Test interactions removed because their user or item never occurs in train.
  std::size_t dropped_cold = 0;
};

SplitResult split(const InteractionTable& table, const SplitSpec& spec);

/// Per-user sorted item lists built from a table.
class UserItems {
 public:
  UserItems() = default;
  UserItems(const InteractionTable& table);
  UserItems(std::size_t n_users, std::size_t n_items, const std::vector<Interaction>& interactions);

  const std::vector<Id>& items(Id user) const { return items_.at(user); }
  bool contains(Id user, Id item) const;
  std::size_t n_users() const { return items_.size(); }
  std::size_t n_items() const { return n_items_; }

 private:
  std::vector<std::vector<Id>> items_;
  std::size_t n_items_ = 0;
};

/// k items drawn uniformly with replacement from the items the user has not
/// consumed in `train` and that are not in `exclude`.
std::vector<Id> sample_negatives(const InteractionTable& train, Id user, std::size_t k, std::uint64_t seed,
                                 const std::vector<Id>& exclude = {});

/// Repeated negative sampling for training loops: rejection sampling against
/// the user's consumed set, sharing one generator.
class NegativeSampler {
 public:
  explicit NegativeSampler(const UserItems& consumed) : consumed_(&consumed) {}

  /// False when the user has consumed every item.
  bool can_sample(Id user) const { return consumed_->items(user).size() < consumed_->n_items(); }
  Id sample(Id user, Rng& rng) const;

 private:
  const UserItems* consumed_;
};

struct SequenceInstance {
  Id user = 0;
  /// Exactly L item ids, oldest first, left-padded with the padding id.
  std::vector<Id> window;
  /// Between 1 and T upcoming items.
  std::vector<Id> targets;
};

struct SequenceDataset {
  std::size_t window = 1;   // L
  std::size_t horizon = 1;  // T
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  /// Chronological item list per user.
  std::vector<std::vector<Id>> histories;
  std::vector<SequenceInstance> instances;

  Id padding_id() const { return static_cast<Id>(n_items); }
  /// Last L items of a user's history, left-padded.
  std::vector<Id> last_window(Id user) const;
};

/// Chronological (timestamp, then input order) item list per user.
std::vector<std::vector<Id>> user_histories(const InteractionTable& table);

SequenceDataset build_sequences(const InteractionTable& table, std::size_t window, std::size_t horizon);

}  // namespace rectape::data
