#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "rectape/data.hpp"
#include "rectape/error.hpp"
#include "text_util.hpp"

namespace rectape::data {

std::vector<SparseRow> read_libfm(std::istream& in, const std::string& source) {
  std::vector<SparseRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto tokens = detail::split_fields(body, ' ');
    SparseRow row;
    const auto label = detail::parse_double(tokens[0]);
    if (!label || !std::isfinite(*label)) {
      throw ParseError(source, line_no, fmt::format("label '{}' is not a number", tokens[0]));
    }
    row.label = *label;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(source, line_no, fmt::format("token '{}' is not index:value", tokens[t]));
      }
      const auto index = detail::parse_int(tokens[t].substr(0, colon));
      const auto value = detail::parse_double(tokens[t].substr(colon + 1));
      if (!index) throw ParseError(source, line_no, fmt::format("index in '{}' is not an integer", tokens[t]));
      if (*index < 0) throw ParseError(source, line_no, fmt::format("negative feature index {}", *index));
      if (*index > static_cast<long long>(UINT32_MAX)) {
        throw ParseError(source, line_no, fmt::format("feature index {} too large", *index));
      }
      if (!value || !std::isfinite(*value)) {
        throw ParseError(source, line_no, fmt::format("value in '{}' is not a number", tokens[t]));
      }
      row.features.emplace_back(static_cast<std::uint32_t>(*index), *value);
    }
    std::stable_sort(row.features.begin(), row.features.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < row.features.size(); ++i) {
      if (row.features[i].first == row.features[i - 1].first) {
        throw ParseError(source, line_no, fmt::format("duplicate feature index {}", row.features[i].first));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SparseRow> parse_libfm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open libfm file '{}'", path));
  auto rows = read_libfm(in, path);
  if (rows.empty()) throw ParseError(path, 0, "no rows found");
  return rows;
}

std::size_t feature_count(const std::vector<SparseRow>& rows) {
  std::size_t n = 0;
  for (const auto& row : rows) {
    if (!row.features.empty()) n = std::max<std::size_t>(n, row.features.back().first + 1);
  }
  return n;
}

}  // namespace rectape::data
