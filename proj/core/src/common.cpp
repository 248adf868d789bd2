#include "cslearn/common.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

namespace cslearn {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

void for_each_csv_row(std::istream& in, const std::string& expected_header,
                      const std::function<void(const std::vector<std::string>&, std::size_t)>& row) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) return;  // empty stream: no header, no rows
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw ParseError("expected header '" + expected_header + "', got '" + line + "'", lineno);
    const std::size_t n_fields = split_csv_line(expected_header).size();
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != n_fields)
            throw ParseError("expected " + std::to_string(n_fields) + " fields, got " +
                                 std::to_string(fields.size()),
                             lineno);
        row(fields, lineno);
    }
}

double parse_double_field(const std::string& field, std::size_t line, const char* what) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw ParseError(std::string("bad ") + what + " value '" + field + "'", line);
    return v;
}

long long parse_int_field(const std::string& field, std::size_t line, const char* what) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw ParseError(std::string("bad ") + what + " value '" + field + "'", line);
    return v;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file for hashing: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::uint64_t h = fnv1a64(ss.str());
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace cslearn
