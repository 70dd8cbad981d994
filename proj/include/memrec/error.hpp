#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memrec {

enum class ErrorCode {
  validation,
  duplicate_record,
  storage_unavailable,
  unknown_user,
  dimension_mismatch,
  zero_vector,
  empty_text,
  provider_unavailable,
  empty_query,
  unparsable_reply,
  replay_exhausted,
  extraction_failed,
  missing_file,
  malformed_header,
  length_mismatch,
  empty_input,
  config_mismatch,
  template_error,
  config_error,
};

// Stable snake_case name, used in logs and HTTP error bodies.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace memrec
