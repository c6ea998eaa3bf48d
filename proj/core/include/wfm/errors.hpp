#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wfm {

// Error taxonomy shared by every module. All errors are exceptions rooted at
// wfm::Error so callers can catch the whole family or a specific kind.

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes (matmul inner dims, mask lengths, ...).
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Signal length violates an operation's contract (pad target too short, ...).
class LengthError : public Error {
public:
    explicit LengthError(const std::string& msg) : Error(msg) {}
};

// Malformed binary file. Carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}
    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

// Invalid argument value (empty batch, n == n', unknown kind, ...).
class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

// Invalid or inconsistent configuration (bad HyperConfig, missing head, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Dataset content problem (missing labels, mixed labeling, ...).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Numerical failure during optimization (non-finite gradient, diverged loss).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Filesystem failure. Carries the path involved.
class IoError : public Error {
public:
    IoError(const std::string& msg, const std::string& path)
        : Error(msg + ": " + path), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

}  // namespace wfm
