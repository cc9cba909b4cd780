#include "kslab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kslab/error.hpp"

namespace kslab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

// Drops a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] == '"') quoted = !quoted;
    if (!quoted && (s[k] == '#' || s[k] == ';')) return s.substr(0, k);
  }
  return s;
}

ConfigScalar parse_scalar(const std::string& raw, int line, const std::string& key) {
  const std::string s = trim(raw);
  if (s.empty()) throw ConfigError(key, line, "empty value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') throw ConfigError(key, line, "unterminated string");
    const std::string inner = s.substr(1, s.size() - 2);
    if (inner.find('"') != std::string::npos) throw ConfigError(key, line, "stray quote in string");
    return inner;
  }
  if (s == "true") return true;
  if (s == "false") return false;
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc() && ptr == last) {
    if (!std::isfinite(v)) throw ConfigError(key, line, "non-finite number");
    return v;
  }
  if (std::isdigit(static_cast<unsigned char>(s.front())) || s.front() == '-' || s.front() == '.')
    throw ConfigError(key, line, "malformed number '" + s + "'");
  if (!valid_name(s)) throw ConfigError(key, line, "bare words may only use [A-Za-z0-9_.-]");
  return s;
}

const char* type_name(const ConfigValue& v) {
  switch (v.value.index()) {
    case 0: return "number";
    case 1: return "boolean";
    case 2: return "string";
    default: return "array";
  }
}

}  // namespace

ConfigValue parse_config_value(const std::string& text, int line, const std::string& key) {
  ConfigValue out;
  out.line = line;
  out.text = trim(text);
  const std::string& s = out.text;
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError(key, line, "unterminated array");
    const std::string inner = trim(s.substr(1, s.size() - 2));
    std::vector<ConfigScalar> items;
    if (!inner.empty()) {
      std::string item;
      bool quoted = false;
      for (char c : inner) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
          items.push_back(parse_scalar(item, line, key));
          item.clear();
        } else if ((c == '[' || c == ']') && !quoted) {
          throw ConfigError(key, line, "nested arrays are not supported");
        } else {
          item += c;
        }
      }
      items.push_back(parse_scalar(item, line, key));
    }
    out.value = std::move(items);
    return out;
  }
  std::visit([&](auto&& v) { out.value = v; }, parse_scalar(s, line, key));
  return out;
}

const ConfigValue* ConfigSection::find(const std::string& key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

void ConfigSection::set(const std::string& key, ConfigValue v) {
  if (!values_.count(key)) order_.push_back(key);
  values_[key] = std::move(v);
}

std::string ConfigSection::qualified(const std::string& key) const {
  return name_.empty() ? key : name_ + "." + key;
}

const ConfigValue& ConfigSection::need(const std::string& key) const {
  const ConfigValue* v = find(key);
  if (!v) throw ConfigError(qualified(key), line_, "missing required key");
  return *v;
}

double ConfigSection::number(const std::string& key) const {
  const ConfigValue& v = need(key);
  if (const double* d = std::get_if<double>(&v.value)) return *d;
  throw ConfigError(qualified(key), v.line, std::string("expected a number, found ") + type_name(v));
}

double ConfigSection::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

std::optional<double> ConfigSection::optional_number(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return number(key);
}

long long ConfigSection::integer(const std::string& key) const {
  const double d = number(key);
  if (d != std::floor(d) || std::abs(d) > 9.0e15)
    throw ConfigError(qualified(key), find(key)->line, "expected an integer");
  return static_cast<long long>(d);
}

long long ConfigSection::integer_or(const std::string& key, long long fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool ConfigSection::boolean_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const ConfigValue& v = need(key);
  if (const bool* b = std::get_if<bool>(&v.value)) return *b;
  throw ConfigError(qualified(key), v.line, std::string("expected a boolean, found ") + type_name(v));
}

std::string ConfigSection::string(const std::string& key) const {
  const ConfigValue& v = need(key);
  if (const std::string* s = std::get_if<std::string>(&v.value)) return *s;
  throw ConfigError(qualified(key), v.line, std::string("expected a string, found ") + type_name(v));
}

std::string ConfigSection::string_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? string(key) : fallback;
}

std::vector<double> ConfigSection::numbers(const std::string& key) const {
  const ConfigValue& v = need(key);
  const auto* arr = std::get_if<std::vector<ConfigScalar>>(&v.value);
  if (!arr) throw ConfigError(qualified(key), v.line, std::string("expected an array, found ") + type_name(v));
  std::vector<double> out;
  for (const auto& item : *arr) {
    const double* d = std::get_if<double>(&item);
    if (!d) throw ConfigError(qualified(key), v.line, "array entries must be numbers");
    out.push_back(*d);
  }
  return out;
}

std::vector<double> ConfigSection::numbers_or(const std::string& key,
                                              std::vector<double> fallback) const {
  return has(key) ? numbers(key) : fallback;
}

void ConfigSection::restrict_keys(const std::vector<std::string>& allowed) const {
  for (const auto& k : order_)
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError(qualified(k), values_.at(k).line, "unknown key");
}

Config Config::parse(const std::string& text) {
  Config cfg;
  cfg.text_ = text;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  ConfigSection* current = nullptr;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("", line, "malformed section header");
      const std::string name = trim(s.substr(1, s.size() - 2));
      if (!valid_name(name)) throw ConfigError("", line, "invalid section name '" + name + "'");
      if (cfg.has(name)) throw ConfigError(name, line, "duplicate section");
      cfg.sections_.emplace_back(name, line);
      current = &cfg.sections_.back();
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("", line, "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    if (!valid_name(key) || key.front() == '.' || key.back() == '.')
      throw ConfigError(key, line, "invalid key name");
    if (!current) throw ConfigError(key, line, "key outside of any section");
    if (current->has(key)) throw ConfigError(current->name() + "." + key, line, "duplicate key");
    current->set(key, parse_config_value(s.substr(eq + 1), line, current->name() + "." + key));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", 0, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool Config::has(const std::string& name) const {
  return std::any_of(sections_.begin(), sections_.end(),
                     [&](const ConfigSection& s) { return s.name() == name; });
}

ConfigSection Config::section(const std::string& name) const {
  for (const auto& s : sections_)
    if (s.name() == name) return s;
  return ConfigSection(name, 0);
}

ConfigSection& Config::section_mut(const std::string& name) {
  for (auto& s : sections_)
    if (s.name() == name) return s;
  sections_.emplace_back(name, 0);
  return sections_.back();
}

std::vector<const ConfigSection*> Config::sections_with_prefix(const std::string& prefix) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections_)
    if (s.name().size() > prefix.size() + 1 && s.name().compare(0, prefix.size(), prefix) == 0 &&
        s.name()[prefix.size()] == '.')
      out.push_back(&s);
  return out;
}

void Config::apply_override(const std::string& dotted_key, const ConfigValue& value) {
  const auto dot = dotted_key.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted_key.size())
    throw ConfigError(dotted_key, value.line, "override keys take the form section.key");
  section_mut(dotted_key.substr(0, dot)).set(dotted_key.substr(dot + 1), value);
}

}  // namespace kslab
