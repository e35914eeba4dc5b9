#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rarenet::io {

/// Line-oriented reader over plain or gzip-compressed (".gz") files.
/// Strips a UTF-8 BOM on the first line and trailing CR.
class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path);
    ~LineReader();
    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    bool next(std::string& line);
    std::size_t line_number() const { return line_number_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::size_t line_number_ = 0;
};

/// Splits a comma-separated line. The input schemas have no quoted fields.
std::vector<std::string_view> split_csv(std::string_view line);

std::string_view trim(std::string_view text);
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

/// Reads a header-led CSV, skipping blank lines and '#' comment lines.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    std::size_t column(std::string_view name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

/// Writes a whole file via temp file + rename so the final path never holds a partial artifact.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace rarenet::io
