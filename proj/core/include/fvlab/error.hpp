#pragma once

#include <stdexcept>
#include <string>

namespace fvlab {

enum class ErrorKind {
    config,           // bad configuration or arguments
    data,             // malformed input data / file contents
    dimension,        // shape or size mismatch
    contract,         // precondition violated by caller
    numeric,          // NaN / divergence during optimization
    io,               // filesystem failure
    missing_artifact  // upstream pipeline artifact not found
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace fvlab
