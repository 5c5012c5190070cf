#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "rectape/data.hpp"
#include "rectape/error.hpp"
#include "text_util.hpp"

namespace rectape::data {

Id IdMap::intern(std::string_view raw) {
  auto it = dense_.find(std::string(raw));
  if (it != dense_.end()) return it->second;
  const auto id = static_cast<Id>(raw_.size());
  raw_.emplace_back(raw);
  dense_.emplace(raw_.back(), id);
  return id;
}

std::optional<Id> IdMap::find(std::string_view raw) const {
  auto it = dense_.find(std::string(raw));
  if (it == dense_.end()) return std::nullopt;
  return it->second;
}

InteractionTable InteractionTable::empty_like() const {
  InteractionTable out;
  out.users = users;
  out.items = items;
  return out;
}

namespace {

char detect_separator(std::string_view line) {
  if (line.find('\t') != std::string_view::npos) return '\t';
  if (line.find(',') != std::string_view::npos) return ',';
  return ' ';
}

}  // namespace

InteractionTable read_interactions(std::istream& in, const LoadOptions& options, const std::string& source) {
  InteractionTable table;
  // Dense pair key -> index into table.interactions.
  std::map<std::pair<Id, Id>, std::size_t> seen;
  std::optional<char> sep = options.separator;

  std::string line;
  std::size_t line_no = 0;
  std::size_t ordinal = 0;
  bool header_pending = options.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = detail::trim(line);
    if (body.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    if (!sep) sep = detect_separator(body);
    const auto fields = detail::split_fields(body, *sep);
    if (fields.size() < 3) {
      throw ParseError(source, line_no, fmt::format("expected at least 3 fields, found {}", fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) throw ParseError(source, line_no, "empty user or item id");
    const auto rating = detail::parse_double(fields[2]);
    if (!rating || !std::isfinite(*rating)) {
      throw ParseError(source, line_no, fmt::format("rating '{}' is not a number", fields[2]));
    }
    std::int64_t timestamp = static_cast<std::int64_t>(ordinal);
    if (fields.size() >= 4) {
      if (auto ts = detail::parse_int(fields[3])) {
        timestamp = *ts;
      } else if (auto tsd = detail::parse_double(fields[3]); tsd && std::isfinite(*tsd)) {
        timestamp = static_cast<std::int64_t>(*tsd);
      } else {
        throw ParseError(source, line_no, fmt::format("timestamp '{}' is not a number", fields[3]));
      }
    }
    Interaction rec;
    rec.user = table.users.intern(fields[0]);
    rec.item = table.items.intern(fields[1]);
    rec.rating = *rating;
    rec.timestamp = timestamp;
    rec.order = ordinal++;

    auto [it, inserted] = seen.try_emplace({rec.user, rec.item}, table.interactions.size());
    if (inserted) {
      table.interactions.push_back(rec);
    } else if (rec.timestamp >= table.interactions[it->second].timestamp) {
      table.interactions[it->second] = rec;
    }
  }
  if (table.interactions.empty()) throw ParseError(source, line_no, "no interactions found");
  return table;
}

InteractionTable load_interactions(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open interaction file '{}'", path));
  return read_interactions(in, options, path);
}

void write_interactions(const std::string& path, const InteractionTable& table) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path));
  for (const auto& r : table.interactions) {
    out << fmt::format("{}\t{}\t{}\t{}\n", table.users.raw(r.user), table.items.raw(r.item), r.rating,
                       r.timestamp);
  }
  if (!out) throw Error(fmt::format("write to '{}' failed", path));
}

InteractionTable binarize(const InteractionTable& table, double threshold) {
  InteractionTable out = table.empty_like();
  for (const auto& r : table.interactions) {
    if (r.rating >= threshold) out.interactions.push_back(r);
  }
  return out;
}

}  // namespace rectape::data
