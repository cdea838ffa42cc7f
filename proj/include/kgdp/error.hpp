#pragma once

#include <stdexcept>
#include <string>

namespace kgdp {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A configuration document failed to parse or validate. `where` is a
// human-readable anchor such as "line 12" or "/resample/epsilon".
class ConfigError : public Error {
 public:
  ConfigError(std::string where, const std::string& what)
      : Error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace kgdp
