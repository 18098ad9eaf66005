#include "forgetlab/csv.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace forgetlab {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

void CsvWriter::field(std::string_view text, bool first) {
    if (!first) os_ << ',';
    if (text.find_first_of(",\"\n\r") == std::string_view::npos) {
        os_ << text;
        return;
    }
    os_ << '"';
    for (char ch : text) {
        if (ch == '"') os_ << '"';
        os_ << ch;
    }
    os_ << '"';
}

void CsvWriter::header(std::span<const std::string> names) {
    bool first = true;
    for (const auto& n : names) {
        field(n, first);
        first = false;
    }
    os_ << '\n';
}

void CsvWriter::row(std::span<const double> values) {
    bool first = true;
    for (double v : values) {
        field(format_double(v), first);
        first = false;
    }
    os_ << '\n';
}

void CsvWriter::row(std::span<const CsvCell> cells) {
    bool first = true;
    for (const auto& c : cells) {
        if (const auto* s = std::get_if<std::string>(&c)) {
            field(*s, first);
        } else if (const auto* d = std::get_if<double>(&c)) {
            field(format_double(*d), first);
        } else {
            field(std::to_string(std::get<std::int64_t>(c)), first);
        }
        first = false;
    }
    os_ << '\n';
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace forgetlab
