#pragma once

#include <stdexcept>
#include <string>

namespace kslab {

/// Violated precondition of an operation (bad parameter range, missing data).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or incomplete run configuration.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, int line, const std::string& what)
      : std::runtime_error(format(key, line, what)), key_(key), line_(line) {}

  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  static std::string format(const std::string& key, int line, const std::string& what) {
    std::string msg = "config error";
    if (line > 0) msg += " at line " + std::to_string(line);
    if (!key.empty()) msg += " (key '" + key + "')";
    return msg + ": " + what;
  }

  std::string key_;
  int line_ = 0;
};

/// Unrecoverable failure inside the time integrator.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw PreconditionError(msg);
}

}  // namespace kslab
