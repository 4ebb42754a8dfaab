#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spa {

enum class ErrorKind {
  contract_violation,
  dimension_mismatch,
  bad_magic,
  unsupported_version,
  truncated_payload,
  size_mismatch,
  malformed_header,
  invalid_value,
  span_out_of_range,
  corpus_too_small,
  undefined_correlation,
  index_mismatch,
  empty_input,
  malformed_input,
  duplicate_id,
  unknown_index,
  infeasible_config,
  io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library. The kind is stable and machine-readable;
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace spa
