#include "spa/error.hpp"

namespace spa {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::contract_violation: return "contract_violation";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::bad_magic: return "bad_magic";
    case ErrorKind::unsupported_version: return "unsupported_version";
    case ErrorKind::truncated_payload: return "truncated_payload";
    case ErrorKind::size_mismatch: return "size_mismatch";
    case ErrorKind::malformed_header: return "malformed_header";
    case ErrorKind::invalid_value: return "invalid_value";
    case ErrorKind::span_out_of_range: return "span_out_of_range";
    case ErrorKind::corpus_too_small: return "corpus_too_small";
    case ErrorKind::undefined_correlation: return "undefined_correlation";
    case ErrorKind::index_mismatch: return "index_mismatch";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::malformed_input: return "malformed_input";
    case ErrorKind::duplicate_id: return "duplicate_id";
    case ErrorKind::unknown_index: return "unknown_index";
    case ErrorKind::infeasible_config: return "infeasible_config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace spa
