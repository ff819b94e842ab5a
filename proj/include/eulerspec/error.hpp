#pragma once

#include <stdexcept>
#include <string>

namespace eulerspec {

enum class ErrorKind {
  invalid_argument,   // bad parameters or preconditions
  out_of_domain,      // evaluation point outside the closed domain
  not_applicable,     // operation undefined for this input (e.g. boundary on a torus)
  numerical_failure,  // solver or integrator could not produce a result
  io,                 // file or stream problems
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::out_of_domain: return "out_of_domain";
    case ErrorKind::not_applicable: return "not_applicable";
    case ErrorKind::numerical_failure: return "numerical_failure";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::invalid_argument, what);
}

}  // namespace eulerspec
