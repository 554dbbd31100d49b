#pragma once

#include <stdexcept>
#include <string>

namespace flowsentry {

enum class ErrorKind {
  malformed_input,    // unparsable or out-of-range input data
  invalid_argument,   // bad configuration / parameter value
  insufficient_data,  // too few samples for the requested operation
  degenerate_data,    // data present but numerically unusable
  contract_violation, // precondition of a query not met
  not_calibrated,     // region used before its normalizer was set
  undefined_metric,   // DR/MTTD/PI with no defining events
  io,                 // file system
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

} // namespace flowsentry
