#include "docnade/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "docnade/error.hpp"

namespace docnade {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::string& context) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw ParseError(context, 0, "not a finite number: '" + std::string(text) + "'");
  }
  return value;
}

std::size_t parse_count(std::string_view text, const std::string& context) {
  text = trim(text);
  std::size_t value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError(context, 0, "not a non-negative integer: '" + std::string(text) + "'");
  }
  return value;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError(source_name, 0, "missing matrix header");
  auto header = split_fields(line);
  if (header.size() != 2) throw ParseError(source_name, line_no, "header must be 'rows cols'");
  std::size_t rows = parse_count(header[0], source_name);
  std::size_t cols = parse_count(header[1], source_name);

  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!next_line()) throw ParseError(source_name, line_no, "expected " + std::to_string(rows) + " rows");
    auto fields = split_fields(line);
    if (fields.size() != cols) {
      throw ParseError(source_name, line_no,
                       "expected " + std::to_string(cols) + " values, got " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      try {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_double(fields[c]);
      } catch (const ParseError& e) {
        throw ParseError(source_name, line_no, e.what());
      }
    }
  }
  if (next_line()) throw ParseError(source_name, line_no, "trailing data after matrix");
  return m;
}

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_matrix(out, m);
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return read_matrix(in, path.string());
}

Settings Settings::parse(std::string_view text, const std::string& source_name) {
  Settings s;
  s.source_name_ = source_name;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source_name, line_no, "expected 'key = value'");
    std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(source_name, line_no, "empty key");
    if (s.has(key)) throw ParseError(source_name, line_no, "duplicate key '" + key + "'");
    s.entries_.emplace_back(std::move(key), std::string(trim(line.substr(eq + 1))));
  }
  return s;
}

Settings Settings::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::string Settings::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

void Settings::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_string();
}

void Settings::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

bool Settings::has(const std::string& key) const { return find(key).has_value(); }

std::optional<std::string> Settings::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string Settings::get(const std::string& key) const {
  auto v = find(key);
  if (!v) throw ConfigError(source_name_ + ": missing key '" + key + "'");
  return *v;
}

std::string Settings::get(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

double Settings::get_double(const std::string& key, double fallback) const {
  auto v = find(key);
  return v ? parse_double(*v, source_name_ + ": " + key) : fallback;
}

double Settings::get_double(const std::string& key) const { return parse_double(get(key), source_name_ + ": " + key); }

std::size_t Settings::get_count(const std::string& key, std::size_t fallback) const {
  auto v = find(key);
  return v ? parse_count(*v, source_name_ + ": " + key) : fallback;
}

std::size_t Settings::get_count(const std::string& key) const {
  return parse_count(get(key), source_name_ + ": " + key);
}

bool Settings::get_bool(const std::string& key, bool fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError(source_name_ + ": key '" + key + "' is not a boolean: '" + *v + "'");
}

std::vector<double> Settings::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  std::string_view rest = *v;
  while (!rest.empty()) {
    std::size_t comma = rest.find(',');
    std::string_view item = trim(rest.substr(0, comma));
    if (!item.empty()) out.push_back(parse_double(item, source_name_ + ": " + key));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError(source_name_ + ": key '" + key + "' holds an empty list");
  return out;
}

std::vector<std::string> Settings::namespaces(const std::string& prefix) const {
  std::vector<std::string> ids;
  for (const auto& [k, v] : entries_) {
    if (k.rfind(prefix, 0) != 0) continue;
    std::size_t dot = k.find('.', prefix.size());
    if (dot == std::string::npos || dot == prefix.size()) continue;
    std::string id = k.substr(prefix.size(), dot - prefix.size());
    bool seen = false;
    for (const auto& existing : ids) seen = seen || existing == id;
    if (!seen) ids.push_back(id);
  }
  return ids;
}

}  // namespace docnade
