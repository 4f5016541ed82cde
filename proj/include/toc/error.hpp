#pragma once

#include <stdexcept>
#include <string>

namespace toc {

// All recoverable failures in the core surface as toc::Error; the C API
// translates them into status codes.
class Error : public std::runtime_error {
public:
    enum class Kind {
        InvalidArg,
        Shape,
        Numeric,
        Io,
        MissingDependency,
        State,
    };

    Error(Kind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

[[noreturn]] inline void fail(Error::Kind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void check(bool cond, Error::Kind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

}  // namespace toc
