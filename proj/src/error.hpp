#pragma once

#include <stdexcept>
#include <string>

namespace uhdn {

// Error categories map 1:1 onto C API status codes and CLI exit codes.
enum class ErrorCode : int {
  internal = 1,  // unexpected failure
  usage = 2,     // bad arguments, unreadable input, malformed config
  mismatch = 3,  // data/checkpoint disagreement (shapes, names, magic)
  numeric = 4,   // numerical verification failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace uhdn
