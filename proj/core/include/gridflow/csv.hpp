#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gridflow::csv {

/// Shortest decimal text that parses back to exactly `value`.
std::string format(double value);

/// Splits one CSV line on commas (no quoting; the project's files never quote).
std::vector<std::string_view> split(std::string_view line);

/// Parses a full field as a double; false on any trailing garbage.
bool parse(std::string_view field, double& value);
bool parse(std::string_view field, int& value);

std::string join(const std::vector<std::string>& fields);

}  // namespace gridflow::csv
