#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpq {

enum class ErrorKind {
  Dimension,
  Numeric,
  Format,
  Config,
  DegenerateInput,
  Integrity,
  State,
  Infeasible,
  Input,
  Training,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the library; callers that care switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace dpq
