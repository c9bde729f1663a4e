#include "recmm/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>

#include "recmm/errors.hpp"

namespace recmm {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Drops a trailing comment, ignoring '#' inside quotes.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool parse_number(const std::string& text, double& out) {
  std::string s;
  for (char c : text)
    if (c != '_') s.push_back(c);
  if (!s.empty() && s[0] == '+') s.erase(0, 1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ValidationError("config line " + std::to_string(line) + ": " + msg);
}

Config::Value parse_value(const std::string& text, std::size_t line) {
  if (text.empty()) fail(line, "missing value");
  if (text == "true") return true;
  if (text == "false") return false;
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') fail(line, "unterminated string");
    return text.substr(1, text.size() - 2);
  }
  if (text.front() == '[') {
    if (text.back() != ']') fail(line, "unterminated array");
    std::vector<double> out;
    const std::string body = trim(std::string_view(text).substr(1, text.size() - 2));
    std::size_t pos = 0;
    while (pos < body.size()) {
      std::size_t comma = body.find(',', pos);
      if (comma == std::string::npos) comma = body.size();
      const std::string item = trim(std::string_view(body).substr(pos, comma - pos));
      if (!item.empty()) {
        double v = 0.0;
        if (!parse_number(item, v)) fail(line, "array entries must be numbers, got '" + item + "'");
        out.push_back(v);
      }
      pos = comma + 1;
    }
    return out;
  }
  double v = 0.0;
  if (!parse_number(text, v)) fail(line, "cannot parse value '" + text + "'");
  return v;
}

const char* type_name(const Config::Value& v) {
  switch (v.index()) {
    case 0: return "number";
    case 1: return "boolean";
    case 2: return "string";
    default: return "array";
  }
}

}  // namespace

const Config::Value& Config::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("config: missing key '" + key + "'");
  return it->second;
}

double Config::number(const std::string& key) const {
  const auto& v = at(key);
  if (auto p = std::get_if<double>(&v)) return *p;
  throw ValidationError("config: '" + key + "' must be a number, got " + type_name(v));
}

double Config::number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

bool Config::boolean(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& v = at(key);
  if (auto p = std::get_if<bool>(&v)) return *p;
  throw ValidationError("config: '" + key + "' must be a boolean, got " + type_name(v));
}

std::string Config::string(const std::string& key) const {
  const auto& v = at(key);
  if (auto p = std::get_if<std::string>(&v)) return *p;
  throw ValidationError("config: '" + key + "' must be a string, got " + type_name(v));
}

std::string Config::string(const std::string& key, const std::string& fallback) const {
  return has(key) ? string(key) : fallback;
}

std::vector<double> Config::array(const std::string& key) const {
  const auto& v = at(key);
  if (auto p = std::get_if<std::vector<double>>(&v)) return *p;
  if (auto p = std::get_if<double>(&v)) return {*p};
  throw ValidationError("config: '" + key + "' must be a numeric array, got " + type_name(v));
}

std::optional<std::vector<double>> Config::optional_array(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return array(key);
}

Config parse_config(std::istream& in) {
  Config cfg;
  std::string prefix;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(lineno, "malformed table header");
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (name.empty()) fail(lineno, "empty table name");
      prefix = name + ".";
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(lineno, "expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (key.empty()) fail(lineno, "empty key");
    key = prefix + key;
    if (cfg.has(key)) fail(lineno, "duplicate key '" + key + "'");
    cfg.set(key, parse_value(trim(std::string_view(line).substr(eq + 1)), lineno));
  }
  return cfg;
}

Config parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config file '" + path + "'");
  return parse_config(in);
}

}  // namespace recmm
