#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace rarenet {

std::optional<std::string> alpha3_from_numeric(int numeric);

/// Alpha-3 codes are upper-cased; numeric codes go through the embedded ISO table.
/// Unknown numeric codes and malformed input yield nullopt.
std::optional<std::string> normalize_country(std::string_view raw);

}  // namespace rarenet
