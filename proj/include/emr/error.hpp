#pragma once

#include <stdexcept>
#include <string>

namespace emr {

enum class ErrorKind {
  config,
  io,
  invariant,
  catalog,
  shape,
  protocol,
  undefined_rate,
};

// Single exception type; the kind drives CLI exit codes.
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

}  // namespace emr
