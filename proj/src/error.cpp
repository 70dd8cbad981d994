#include "memrec/error.hpp"

namespace memrec {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::duplicate_record: return "duplicate_record";
    case ErrorCode::storage_unavailable: return "storage_unavailable";
    case ErrorCode::unknown_user: return "unknown_user";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::zero_vector: return "zero_vector";
    case ErrorCode::empty_text: return "empty_text";
    case ErrorCode::provider_unavailable: return "provider_unavailable";
    case ErrorCode::empty_query: return "empty_query";
    case ErrorCode::unparsable_reply: return "unparsable_reply";
    case ErrorCode::replay_exhausted: return "replay_exhausted";
    case ErrorCode::extraction_failed: return "extraction_failed";
    case ErrorCode::missing_file: return "missing_file";
    case ErrorCode::malformed_header: return "malformed_header";
    case ErrorCode::length_mismatch: return "length_mismatch";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::config_mismatch: return "config_mismatch";
    case ErrorCode::template_error: return "template_error";
    case ErrorCode::config_error: return "config_error";
  }
  return "unknown";
}

}  // namespace memrec
