#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tidac {

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Configuration failure carrying every violation found, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }

  std::vector<std::string> violations_;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& what) { throw InvalidArgument(what); }

inline void require(bool ok, const char* what) {
  if (!ok) fail(what);
}

}  // namespace detail
}  // namespace tidac
