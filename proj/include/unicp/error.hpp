#pragma once

#include <stdexcept>
#include <string>

namespace unicp {

// Values double as process exit codes for the command line tool.
enum class ErrorCode : int {
    invalid_argument = 2,
    missing_artifact = 3,
    numeric          = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline Error invalid_argument(const std::string& what) {
    return Error(ErrorCode::invalid_argument, what);
}

}  // namespace unicp
