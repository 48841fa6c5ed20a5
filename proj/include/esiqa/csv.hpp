#pragma once

// Minimal RFC 4180 reader/writer: comma separated, optional double-quoted
// fields with "" escapes, LF or CRLF line endings.

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace esiqa::csv {

struct CsvError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

using Row = std::vector<std::string>;

/// Reads one logical record. Returns false at end of input.
bool read_row(std::istream& in, Row& row);

struct Table {
    Row header;
    std::vector<Row> rows;

    /// Index of a header column; throws CsvError when absent.
    std::size_t column(const std::string& name) const;
};

/// Parses a whole document; every row must have the header's field count.
Table read_table(std::istream& in);
Table read_file(const std::string& path);

std::string escape(const std::string& field);
void write_row(std::ostream& out, const Row& row);

/// Fixed formatting used by every report writer: shortest round-trip
/// representation is not needed, 10 significant digits is.
std::string fmt(double value);

}  // namespace esiqa::csv
