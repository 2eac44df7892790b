#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kgnpro {

// Shortest decimal form that parses back to the identical double
// (std::to_chars / from_chars, locale independent).
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);

std::vector<std::string> split_ws(const std::string& line);
std::vector<std::string> split_char(const std::string& line, char sep);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Sorted list of regular files in dir whose names end with `suffix`.
std::vector<std::string> list_files(const std::string& dir,
                                    const std::string& suffix);

}  // namespace kgnpro
