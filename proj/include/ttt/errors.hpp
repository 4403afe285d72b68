#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ttt {

enum class ErrorKind {
  Domain,            // invalid numeric input (non-positive price, bad parameter)
  Alignment,         // quotes or points that should share a date do not
  Parse,             // malformed input row or file
  MissingColumn,     // CSV header lacks a required column
  EmptySeries,       // nothing left after ingestion
  Ordering,          // times out of order
  Range,             // time outside the admissible horizon
  DegenerateBridge,  // terminal variance below the ellipticity floor
  NumericDegeneracy, // one-step variance below floor
  Propagation,       // NaN produced by an emission
  Fit,               // optimizer failure
  InternalContract,  // a numerical contract of the library was breached
  SampleSize,
  BootstrapFailure,
  Config,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ttt
