#include "aeroflight/text.hpp"

#include "aeroflight/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace aeroflight::text {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, int line) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("invalid number '" + std::string(s) + "'", line);
  }
  return v;
}

long parse_long(std::string_view s, int line) {
  s = trim(s);
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("invalid integer '" + std::string(s) + "'", line);
  }
  return v;
}

std::vector<double> parse_list(std::string_view s, std::size_t n, int line) {
  const auto parts = split(s, ',');
  if (parts.size() != n) {
    throw ParseError("expected " + std::to_string(n) + " comma separated values, got '" +
                         std::string(s) + "'",
                     line);
  }
  std::vector<double> out;
  out.reserve(n);
  for (const auto& p : parts) out.push_back(parse_double(p, line));
  return out;
}

Eigen::Vector3d parse_vec3(std::string_view s, int line) {
  const auto v = parse_list(s, 3, line);
  return {v[0], v[1], v[2]};
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::map<std::string, std::string> parse_kv_tokens(const std::vector<std::string>& tokens,
                                                   std::size_t first, int line) {
  std::map<std::string, std::string> kv;
  for (std::size_t i = first; i < tokens.size(); ++i) {
    const auto eq = tokens[i].find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError("expected key=value, got '" + tokens[i] + "'", line);
    }
    auto key = tokens[i].substr(0, eq);
    if (!kv.emplace(key, tokens[i].substr(eq + 1)).second) {
      throw ParseError("duplicate key '" + key + "'", line);
    }
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(std::string_view contents) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(contents)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto hash = raw.find('#');
    auto line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ParseError("expected key=value", line_no);
    }
    std::string key(trim(line.substr(0, eq)));
    if (!kv.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
      throw ParseError("duplicate key '" + key + "'", line_no);
    }
  }
  return kv;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("error writing '" + path + "'");
}

std::string dirname(const std::string& path) {
  const auto pos = path.find_last_of('/');
  return pos == std::string::npos ? std::string() : path.substr(0, pos);
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || path.front() == '/' || base_dir.empty()) return path;
  return base_dir + "/" + path;
}

}  // namespace aeroflight::text
