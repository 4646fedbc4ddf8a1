#include "apsgd/error.hpp"

namespace apsgd {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::InvalidParam: return "InvalidParam";
    case ErrorKind::MissingOracle: return "MissingOracle";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::DataFormatError: return "DataFormatError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace apsgd
