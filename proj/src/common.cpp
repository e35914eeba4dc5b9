#include "rarenet/common.hpp"

#include <charconv>
#include <cstdio>

namespace rarenet {

std::optional<HsCode> HsCode::parse(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (text.size() != 6) return std::nullopt;
    std::uint32_t code = 0;
    for (char ch : text) {
        if (ch < '0' || ch > '9') return std::nullopt;
        code = code * 10 + static_cast<std::uint32_t>(ch - '0');
    }
    return HsCode(code);
}

std::string HsCode::str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06u", code_);
    return buf;
}

YearWindow YearWindow::parse(std::string_view text) {
    auto to_year = [&](std::string_view part) {
        int value = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
        if (ec != std::errc{} || ptr != part.data() + part.size()) {
            throw ConfigError("invalid year window: '" + std::string(text) + "'");
        }
        return value;
    };
    auto dash = text.find('-');
    YearWindow window;
    if (dash == std::string_view::npos) {
        window.first = window.last = to_year(text);
    } else {
        window.first = to_year(text.substr(0, dash));
        window.last = to_year(text.substr(dash + 1));
    }
    if (window.last < window.first) throw ConfigError("year window ends before it starts: '" + std::string(text) + "'");
    return window;
}

std::string YearWindow::str() const {
    return std::to_string(first) + "-" + std::to_string(last);
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

std::string format_optional(const std::optional<double>& value) {
    return value ? format_double(*value) : std::string();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state) {
    for (unsigned char ch : bytes) {
        state ^= ch;
        state *= 0x100000001b3ULL;
    }
    return state;
}

std::string hex_digest(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

}  // namespace rarenet
