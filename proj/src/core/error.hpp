// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace relgen {

// invalid_input maps to CLI exit code 1, runtime to exit code 2.
enum class ErrorKind { invalid_input, runtime };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_invalid(const std::string& msg) {
    throw Error(ErrorKind::invalid_input, msg);
}

[[noreturn]] inline void fail_runtime(const std::string& msg) {
    throw Error(ErrorKind::runtime, msg);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail_invalid(msg);
}

namespace core {
using relgen::Error;
using relgen::ErrorKind;
using relgen::fail_invalid;
using relgen::fail_runtime;
using relgen::require;
}  // namespace core

}  // namespace relgen
