#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rarenet {

// Error taxonomy. The CLI maps these onto exit codes 2, 3 and 4.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using CountryCode = std::string;
using Year = int;

/// Six-digit Harmonized System product code. Stored numerically, printed zero-padded.
class HsCode {
public:
    constexpr HsCode() = default;
    constexpr explicit HsCode(std::uint32_t code) : code_(code) {}

    /// Parses exactly six ASCII digits; anything else yields nullopt.
    static std::optional<HsCode> parse(std::string_view text);

    constexpr std::uint32_t value() const { return code_; }
    std::string str() const;

    constexpr auto operator<=>(const HsCode&) const = default;

private:
    std::uint32_t code_ = 0;
};

/// Inclusive range of calendar years.
struct YearWindow {
    Year first = 0;
    Year last = 0;

    constexpr int length() const { return last - first + 1; }
    constexpr bool contains(Year y) const { return y >= first && y <= last; }
    constexpr bool overlaps(const YearWindow& other) const {
        return first <= other.last && other.first <= last;
    }
    constexpr auto operator<=>(const YearWindow&) const = default;

    /// "2008-2011" (or a single year "2010").
    static YearWindow parse(std::string_view text);
    std::string str() const;
};

/// Shortest round-trippable decimal rendering of a double.
std::string format_double(double value);
/// Empty string for nullopt.
std::string format_optional(const std::optional<double>& value);

/// splitmix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// 64-bit FNV-1a digest, rendered as 16 hex digits.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex_digest(std::uint64_t digest);

}  // namespace rarenet

template <>
struct std::hash<rarenet::HsCode> {
    std::size_t operator()(const rarenet::HsCode& code) const noexcept {
        return std::hash<std::uint32_t>{}(code.value());
    }
};
