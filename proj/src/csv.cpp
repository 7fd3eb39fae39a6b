#include "flowcast/csv.hpp"

#include <cctype>
#include <ostream>

#include "flowcast/error.hpp"

namespace flowcast::csv {

std::vector<std::string> split_row(const std::string& line, char delimiter) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == delimiter) {
            fields.push_back(cur);
            cur.clear();
        } else if (c == '\r' && i + 1 == line.size()) {
            // tolerate CRLF input
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw DataError("unterminated quote in CSV row: " + line);
    fields.push_back(cur);
    return fields;
}

std::string format_field(const std::string& field, char delimiter) {
    bool needs_quote = false;
    for (char c : field) {
        if (c == delimiter || c == '"' || c == '\n' || c == '\r') {
            needs_quote = true;
            break;
        }
    }
    if (!field.empty() && (std::isspace(static_cast<unsigned char>(field.front())) ||
                           std::isspace(static_cast<unsigned char>(field.back())))) {
        needs_quote = true;
    }
    if (!needs_quote) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields, char delimiter) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.put(delimiter);
        out << format_field(fields[i], delimiter);
    }
    out.put('\n');
}

}  // namespace flowcast::csv
