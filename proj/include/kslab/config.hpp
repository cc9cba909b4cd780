#pragma once

// Sectioned key-value configuration text:
//
//   # comment            (also ';')
//   [section]            names: letters, digits, '_', '.', '-'
//   key = value          value: number | true | false | "string" | bare_word
//   key = [v1, v2, ...]  inline array of scalars
//
// Keys are unique within a section; sections keep file order. Dotted keys
// ("model.beta = 2") are only meaningful as scenario overrides.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace kslab {

using ConfigScalar = std::variant<double, bool, std::string>;

struct ConfigValue {
  std::variant<double, bool, std::string, std::vector<ConfigScalar>> value;
  int line = 0;
  std::string text;  // right-hand side as written
};

class ConfigSection {
 public:
  explicit ConfigSection(std::string name = {}, int line = 0) : name_(std::move(name)), line_(line) {}

  const std::string& name() const { return name_; }
  int line() const { return line_; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const ConfigValue* find(const std::string& key) const;
  const std::vector<std::string>& keys() const { return order_; }
  void set(const std::string& key, ConfigValue v);

  // Typed access; ConfigError names the key and line on a type mismatch.
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  std::optional<double> optional_number(const std::string& key) const;
  long long integer(const std::string& key) const;
  long long integer_or(const std::string& key, long long fallback) const;
  bool boolean_or(const std::string& key, bool fallback) const;
  std::string string(const std::string& key) const;
  std::string string_or(const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<double> numbers_or(const std::string& key, std::vector<double> fallback) const;

  /// Throws ConfigError for the first key outside `allowed`.
  void restrict_keys(const std::vector<std::string>& allowed) const;

 private:
  const ConfigValue& need(const std::string& key) const;
  std::string qualified(const std::string& key) const;

  std::string name_;
  int line_ = 0;
  std::map<std::string, ConfigValue> values_;
  std::vector<std::string> order_;
};

class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  const std::string& text() const { return text_; }
  bool has(const std::string& section) const;
  /// Missing sections read as empty (keeping the name for error messages).
  ConfigSection section(const std::string& name) const;
  ConfigSection& section_mut(const std::string& name);
  const std::vector<ConfigSection>& sections() const { return sections_; }
  /// Sections named "<prefix>.<id>", in file order.
  std::vector<const ConfigSection*> sections_with_prefix(const std::string& prefix) const;

  /// Applies an override "section.key = value" (value parsed like the file).
  void apply_override(const std::string& dotted_key, const ConfigValue& value);

 private:
  std::string text_;
  std::vector<ConfigSection> sections_;
};

/// Parses one right-hand side; exposed for overrides and tests.
ConfigValue parse_config_value(const std::string& text, int line, const std::string& key);

}  // namespace kslab
