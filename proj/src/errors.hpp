#pragma once

#include <stdexcept>
#include <string>

namespace llgm {

// I/O failure (missing file, short read/write).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unsupported file contents (bad magic, version, bit depth).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller violated a precondition (bad dimensions, invalid config value).
struct InvalidArgument : std::invalid_argument {
    explicit InvalidArgument(const std::string& msg) : std::invalid_argument(msg) {}
};

// Two otherwise-valid artifacts cannot be used together (K mismatch,
// model dims vs image dims, frozen-geometry mutation).
struct IncompatibleError : std::runtime_error {
    explicit IncompatibleError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace llgm
