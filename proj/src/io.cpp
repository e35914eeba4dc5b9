#include "rarenet/io.hpp"

#include <zlib.h>

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rarenet/common.hpp"

namespace rarenet::io {

namespace fs = std::filesystem;

struct LineReader::Impl {
    gzFile file = nullptr;
    bool first = true;
};

LineReader::LineReader(const fs::path& path) : impl_(std::make_unique<Impl>()) {
    if (!fs::exists(path)) throw DataError("missing file: " + path.string());
    // gzopen reads uncompressed files transparently, so one code path serves both.
    impl_->file = gzopen(path.c_str(), "rb");
    if (impl_->file == nullptr) throw DataError("cannot open file: " + path.string());
    gzbuffer(impl_->file, 1 << 16);
}

LineReader::~LineReader() {
    if (impl_ && impl_->file != nullptr) gzclose(impl_->file);
}

bool LineReader::next(std::string& line) {
    line.clear();
    char buf[4096];
    bool any = false;
    while (gzgets(impl_->file, buf, sizeof(buf)) != nullptr) {
        any = true;
        line.append(buf);
        if (!line.empty() && line.back() == '\n') break;
    }
    if (!any) {
        int err = 0;
        const char* msg = gzerror(impl_->file, &err);
        if (err != Z_OK && err != Z_STREAM_END) throw DataError(std::string("read error: ") + msg);
        return false;
    }
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
    if (impl_->first) {
        impl_->first = false;
        if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    }
    ++line_number_;
    return true;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::string_view trim(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    return text;
}

std::optional<double> parse_double(std::string_view text) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::optional<long long> parse_int(std::string_view text) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw DataError("missing column '" + std::string(name) + "'");
}

CsvTable read_csv(const fs::path& path) {
    LineReader reader(path);
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (reader.next(line)) {
        auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        std::vector<std::string> fields;
        for (auto field : split_csv(view)) fields.emplace_back(trim(field));
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        table.rows.push_back(std::move(fields));
        table.line_numbers.push_back(reader.line_number());
    }
    if (!have_header) throw DataError("missing header: " + path.string());
    return table;
}

void write_atomic(const fs::path& path, std::string_view contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write: " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace rarenet::io
