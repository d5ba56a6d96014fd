#pragma once

#include <stdexcept>
#include <string>

namespace kcf {

enum class ErrorKind {
  input,         // unreadable stream, malformed artifact
  config,        // bad or missing configuration
  version,       // incompatible artifact version
  domain,        // argument outside a function's domain
  empty_corpus,  // filtering removed everything
  contract,      // caller violated a shape/length precondition
  diverged,      // non-finite training loss
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::contract, what);
}

}  // namespace kcf
