#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace carl::csv {

std::vector<std::string_view> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view text);

/// Strict numeric parsing; throws std::invalid_argument naming the offending text.
double to_double(std::string_view text);
long to_long(std::string_view text);

/// Shortest-ish fixed representation used by every CSV writer in the project.
std::string fmt(double value, int digits = 10);

/// Column lookup over a parsed header row.
class Header {
 public:
  explicit Header(std::string_view line);
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t require(std::string_view name) const;
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
};

}  // namespace carl::csv
