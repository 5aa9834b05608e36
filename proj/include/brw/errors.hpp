#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace brw {

/// Raised when an operation receives a parameter outside its admissible range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation is called in a mode that does not support it.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The linear system has a null space larger than the constants.
class SingularSystemError : public std::runtime_error {
 public:
  SingularSystemError(const std::string& what, std::size_t components)
      : std::runtime_error(what), components_(components) {}
  std::size_t components() const { return components_; }

 private:
  std::size_t components_;
};

/// Config parsing / validation failure. Carries every problem found.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out;
    for (const auto& s : p) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> problems_;
};

}  // namespace brw
