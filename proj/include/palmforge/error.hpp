#pragma once

#include <stdexcept>
#include <string>

namespace palmforge {

// Error kinds mirror the pf_status codes of the C API one-to-one so the
// boundary translation in capi.cpp is a table lookup, not a judgement call.
enum class ErrorCode {
    invalid_argument = 1,
    shape_mismatch = 2,
    io_error = 3,
    format_error = 4,
    truncated = 5,
    non_finite = 6,
    integrity_error = 7,
    empty_library = 8,
    insufficient_samples = 9,
    config_error = 10,
    protocol_error = 11,
    not_found = 12,
    internal_error = 13,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool ok, ErrorCode code, const std::string& message) {
    if (!ok) fail(code, message);
}

} // namespace palmforge
