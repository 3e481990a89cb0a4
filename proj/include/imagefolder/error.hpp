#pragma once

#include <stdexcept>
#include <string>

namespace imagefolder {

enum class ErrorCode {
    invalid_argument,
    invalid_state,
    training_diverged,
    corrupt_token,
    insufficient_data,
    regularization_required,
    instance_too_large,
    io_error,
    config_error,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::invalid_state: return "invalid-state";
        case ErrorCode::training_diverged: return "training-diverged";
        case ErrorCode::corrupt_token: return "corrupt-token";
        case ErrorCode::insufficient_data: return "insufficient-data";
        case ErrorCode::regularization_required: return "regularization-required";
        case ErrorCode::instance_too_large: return "instance-too-large";
        case ErrorCode::io_error: return "io-error";
        case ErrorCode::config_error: return "config-error";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

namespace detail {

inline void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) throw Error(code, msg);
}

inline void require_arg(bool cond, const std::string& msg) {
    if (!cond) throw Error(ErrorCode::invalid_argument, msg);
}

}  // namespace detail
}  // namespace imagefolder
