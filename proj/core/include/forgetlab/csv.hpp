#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace forgetlab {

/// Shortest decimal form that round-trips to the same double ("nan"/"inf" for non-finite).
std::string format_double(double x);

using CsvCell = std::variant<std::string, double, std::int64_t>;

/// Minimal RFC-4180-style writer; fields containing ',', '"' or newlines are quoted.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    void header(std::span<const std::string> names);
    void row(std::span<const double> values);
    void row(std::span<const CsvCell> cells);

private:
    void field(std::string_view text, bool first);
    std::ostream& os_;
};

/// Splits one CSV line (no embedded newlines) into fields, honouring quotes.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace forgetlab
