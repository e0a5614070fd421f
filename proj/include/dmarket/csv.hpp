#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "dmarket/error.hpp"

namespace dmarket::csv {

struct Record {
    std::size_t line = 0; // 1-based physical line where the record starts
    std::vector<std::string> fields;
};

// RFC 4180 style parsing: quoted fields may contain commas, doubled quotes and
// newlines. A trailing '\r' before a newline is dropped.
inline std::vector<Record> parse(std::string_view text) {
    std::vector<Record> out;
    Record current;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;
    current.line = 1;

    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&](std::size_t next_line) {
        end_field();
        bool blank = current.fields.size() == 1 && current.fields[0].empty();
        if (!blank) out.push_back(std::move(current));
        current = Record{};
        current.line = next_line;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field_started || field.empty()) in_quotes = true;
            else field.push_back(c);
            field_started = true;
            break;
        case ',':
            end_field();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') break;
            field.push_back(c);
            break;
        case '\n':
            ++line;
            end_record(line);
            break;
        default:
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw InputError("unterminated quoted field starting on line " + std::to_string(current.line));
    if (field_started || !field.empty() || !current.fields.empty()) end_record(line);
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Parsed file with a header row and column lookup.
class Table {
public:
    static Table read(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) throw InputError("missing file: " + path.string());
        Table t;
        t.path_ = path.string();
        auto records = parse(read_file(path));
        if (records.empty()) throw InputError(path.string() + ": missing header row");
        t.header_ = std::move(records.front().fields);
        if (!t.header_.empty() && t.header_[0].rfind("\xEF\xBB\xBF", 0) == 0) t.header_[0].erase(0, 3);
        for (std::size_t i = 0; i < t.header_.size(); ++i) t.index_[t.header_[i]] = i;
        t.rows_.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
        return t;
    }

    const std::string& path() const { return path_; }
    const std::vector<std::string>& header() const { return header_; }
    const std::vector<Record>& rows() const { return rows_; }

    std::optional<std::size_t> column(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t require(std::string_view name) const {
        auto c = column(name);
        if (!c) throw InputError(path_ + ": missing required column '" + std::string(name) + "'");
        return *c;
    }

private:
    std::string path_;
    std::vector<std::string> header_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<Record> rows_;
};

inline std::string quote(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

// Shortest representation that round-trips.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
    Int v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<double> parse_double(std::string_view s) {
    double v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

// Writes to a sibling temporary file and renames it over the target, so a
// failed run never leaves a truncated file behind.
inline void write_atomic(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write file: " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw InputError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw InputError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

// Accumulates rows in memory; flushed with write_atomic.
class Writer {
public:
    explicit Writer(std::vector<std::string> header) : columns_(header.size()) { row(header); }

    template <class... Cells>
    Writer& add(const Cells&... cells) {
        static_assert(sizeof...(Cells) > 0);
        std::vector<std::string> fields{cell(cells)...};
        row(fields);
        return *this;
    }

    void row(const std::vector<std::string>& fields) {
        if (fields.size() != columns_) throw Error("csv writer: wrong field count");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) buf_.push_back(',');
            buf_ += quote(fields[i]);
        }
        buf_.push_back('\n');
    }

    const std::string& str() const { return buf_; }
    void save(const std::filesystem::path& path) const { write_atomic(path, buf_); }

private:
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(std::string_view s) { return std::string(s); }
    static std::string cell(double v) { return format_double(v); }
    static std::string cell(bool v) { return v ? "1" : "0"; }
    template <class Int, class = std::enable_if_t<std::is_integral_v<Int>>>
    static std::string cell(Int v) { return std::to_string(v); }

    std::size_t columns_;
    std::string buf_;
};

} // namespace dmarket::csv
