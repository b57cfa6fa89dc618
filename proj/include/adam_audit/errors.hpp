#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adam_audit {

enum class ErrorKind {
  dimension_mismatch,
  division_guard,
  not_yet_stepped,
  domain,
  validation,
  sequencing,
  config,
  overflow,
  propagation,
  audit,
  io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::division_guard: return "division_guard";
    case ErrorKind::not_yet_stepped: return "not_yet_stepped";
    case ErrorKind::domain: return "domain";
    case ErrorKind::validation: return "validation";
    case ErrorKind::sequencing: return "sequencing";
    case ErrorKind::config: return "config";
    case ErrorKind::overflow: return "overflow";
    case ErrorKind::propagation: return "propagation";
    case ErrorKind::audit: return "audit";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by step() when a denominator coordinate is exactly zero.
class DivisionGuardError : public Error {
 public:
  explicit DivisionGuardError(std::size_t coordinate)
      : Error(ErrorKind::division_guard,
              "denominator is exactly zero at coordinate " + std::to_string(coordinate)),
        coordinate_(coordinate) {}

  std::size_t coordinate() const noexcept { return coordinate_; }

 private:
  std::size_t coordinate_;
};

// A theory constant came out non-finite; `term` names the offending piece.
class OverflowError : public Error {
 public:
  explicit OverflowError(const std::string& term)
      : Error(ErrorKind::overflow, "non-finite value in " + term), term_(term) {}

  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace adam_audit
