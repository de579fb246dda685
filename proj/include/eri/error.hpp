#pragma once

#include <stdexcept>
#include <string>

namespace eri {

enum class ErrorKind {
  domain,    // argument outside the operation's mathematical domain
  contract,  // shape / registry / layout mismatch between collaborating objects
  format,    // malformed file or header
  io,        // filesystem failure
  numeric,   // NaN or Inf produced during computation
  usage,     // invalid configuration key or value
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace eri
