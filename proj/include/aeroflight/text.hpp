#pragma once

// Small text helpers shared by the line-based file formats.

#include <Eigen/Core>

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace aeroflight::text {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

/// Strict decimal parse; throws ParseError (with line) on trailing junk or empty input.
double parse_double(std::string_view s, int line = 0);
long parse_long(std::string_view s, int line = 0);

/// Comma separated list of exactly n numbers.
std::vector<double> parse_list(std::string_view s, std::size_t n, int line = 0);
Eigen::Vector3d parse_vec3(std::string_view s, int line = 0);

std::vector<std::string> split_ws(std::string_view line);
std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

/// Parses `key=value` tokens; bare tokens are rejected. Duplicate keys are an error.
std::map<std::string, std::string> parse_kv_tokens(const std::vector<std::string>& tokens,
                                                   std::size_t first, int line = 0);

/// One `key=value` per line, `#` comments, blank lines ignored.
std::map<std::string, std::string> parse_kv_file(std::string_view contents);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// Directory part of a path ("" if none); used to resolve relative references.
std::string dirname(const std::string& path);
std::string resolve(const std::string& base_dir, const std::string& path);

}  // namespace aeroflight::text
