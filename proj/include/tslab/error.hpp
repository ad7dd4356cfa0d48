#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tslab {

enum class ErrorCode {
    invalid_input,
    shape_mismatch,
    degenerate_task,
    degenerate_gate,
    invalid_density,
    invalid_regularizer,
    near_duplicate_feature,
    degenerate_metric,
    instability,
    format_error,
    precondition,
    io_error,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_input: return "invalid_input";
        case ErrorCode::shape_mismatch: return "shape_mismatch";
        case ErrorCode::degenerate_task: return "degenerate_task";
        case ErrorCode::degenerate_gate: return "degenerate_gate";
        case ErrorCode::invalid_density: return "invalid_density";
        case ErrorCode::invalid_regularizer: return "invalid_regularizer";
        case ErrorCode::near_duplicate_feature: return "near_duplicate_feature";
        case ErrorCode::degenerate_metric: return "degenerate_metric";
        case ErrorCode::instability: return "instability";
        case ErrorCode::format_error: return "format_error";
        case ErrorCode::precondition: return "precondition";
        case ErrorCode::io_error: return "io_error";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-readable code so that
/// sweeps can tag a row instead of aborting.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) throw Error(code, message);
}

}  // namespace tslab
