#pragma once

#include <stdexcept>
#include <string>

namespace rectdiff {

// Error categories map 1:1 onto CLI exit codes (see tools/): config=2,
// io=3, state=4, numeric=5, shape=4.
enum class ErrorCategory {
    config,
    io,
    state,
    shape,
    numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, const std::string& msg)
        : std::runtime_error(msg), cat_(cat) {}

    ErrorCategory category() const { return cat_; }

    static const char* category_name(ErrorCategory cat) {
        switch (cat) {
            case ErrorCategory::config: return "config";
            case ErrorCategory::io: return "io";
            case ErrorCategory::state: return "state";
            case ErrorCategory::shape: return "shape";
            case ErrorCategory::numeric: return "numeric";
        }
        return "unknown";
    }

    static int exit_code(ErrorCategory cat) {
        switch (cat) {
            case ErrorCategory::config: return 2;
            case ErrorCategory::io: return 3;
            case ErrorCategory::state: return 4;
            case ErrorCategory::shape: return 4;
            case ErrorCategory::numeric: return 5;
        }
        return 1;
    }

private:
    ErrorCategory cat_;
};

}  // namespace rectdiff
