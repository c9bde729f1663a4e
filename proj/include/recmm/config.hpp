#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace recmm {

/// Flat key/value configuration read from a small TOML subset: `key = value`
/// lines with numbers, booleans, quoted strings and numeric arrays, `#`
/// comments, and `[table]` headers that prefix the following keys as
/// `table.key`.
class Config {
 public:
  using Value = std::variant<double, bool, std::string, std::vector<double>>;

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, Value v) { values_[key] = std::move(v); }
  const std::map<std::string, Value>& values() const { return values_; }

  double number(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::string string(const std::string& key) const;
  std::string string(const std::string& key, const std::string& fallback) const;
  std::vector<double> array(const std::string& key) const;
  std::optional<std::vector<double>> optional_array(const std::string& key) const;

 private:
  const Value& at(const std::string& key) const;
  std::map<std::string, Value> values_;
};

Config parse_config(std::istream& in);
Config parse_config_file(const std::string& path);

}  // namespace recmm
