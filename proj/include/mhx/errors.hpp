#pragma once

#include <stdexcept>
#include <string>

namespace mhx {

/// Input, configuration, or schema rejected by validation. Maps to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem failure (missing file, unreadable path). Maps to exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Remote service failure (embedding or generative endpoint). Maps to exit code 2.
class RemoteError : public std::runtime_error {
public:
    explicit RemoteError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace mhx
