#include "esiqa/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace esiqa::csv {

bool read_row(std::istream& in, Row& row) {
    row.clear();
    if (in.peek() == std::char_traits<char>::eof()) return false;
    std::string field;
    bool quoted = false;
    bool any = false;
    char ch;
    while (in.get(ch)) {
        any = true;
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            break;
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    if (quoted) throw CsvError("csv: unterminated quoted field");
    if (!any) return false;
    row.push_back(std::move(field));
    return true;
}

std::size_t Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw CsvError("csv: missing column '" + name + "'");
}

Table read_table(std::istream& in) {
    Table t;
    if (!read_row(in, t.header)) throw CsvError("csv: empty document (header row required)");
    if (!t.header.empty() && t.header[0].starts_with("\xEF\xBB\xBF")) t.header[0].erase(0, 3);
    Row row;
    std::size_t line = 1;
    while (read_row(in, row)) {
        ++line;
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != t.header.size()) {
            throw CsvError("csv: line " + std::to_string(line) + " has " + std::to_string(row.size()) + " fields, expected " +
                           std::to_string(t.header.size()));
        }
        t.rows.push_back(row);
    }
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CsvError("csv: cannot open " + path);
    return read_table(in);
}

std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const Row& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << escape(row[i]);
    }
    out << '\n';
}

std::string fmt(double value) {
    if (std::isnan(value)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    return buf;
}

}  // namespace esiqa::csv
