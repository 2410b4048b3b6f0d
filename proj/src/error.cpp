#include "dpq/error.hpp"

namespace dpq {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Format: return "format";
    case ErrorKind::Config: return "config";
    case ErrorKind::DegenerateInput: return "degenerate_input";
    case ErrorKind::Integrity: return "integrity";
    case ErrorKind::State: return "state";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::Input: return "input";
    case ErrorKind::Training: return "training";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace dpq
