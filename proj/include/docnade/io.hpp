#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace docnade {

// Shortest text that parses back to exactly the same double (17 significant digits max).
std::string format_double(double value);

// Parses a finite decimal or scientific literal; throws ParseError otherwise.
double parse_double(std::string_view text, const std::string& context = "number");
std::size_t parse_count(std::string_view text, const std::string& context = "count");

// Matrix text format: first line "rows cols", then one line per row with
// space-separated values at 17 significant digits.
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(std::istream& in, const std::string& source_name);
void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);

// Ordered key/value lines. Accepts both "key=value" and "key = value"; '#'
// starts a comment line.
class Settings {
 public:
  static Settings parse(std::string_view text, const std::string& source_name = "<memory>");
  static Settings load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  std::string to_string() const;

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;

  std::string get(const std::string& key) const;  // throws ConfigError when missing
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  double get_double(const std::string& key) const;
  std::size_t get_count(const std::string& key, std::size_t fallback) const;
  std::size_t get_count(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  // Keys of the form "<prefix><id>.<rest>", returned as distinct ids in first-seen order.
  std::vector<std::string> namespaces(const std::string& prefix) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string source_name_ = "<memory>";
};

}  // namespace docnade
