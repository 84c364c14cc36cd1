#pragma once

#include <stdexcept>
#include <string>

namespace implisat {

// Every failure raised by the library derives from Error so callers (and the
// CLI exit-code mapping) can dispatch on the concrete kind.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ModeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    IoError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Malformed on-disk data: manifests, payloads, checkpoints.
class FormatError : public Error {
public:
    using Error::Error;
};

class TruncationError : public FormatError {
public:
    TruncationError(const std::string& what, std::size_t expected, std::size_t actual)
        : FormatError(what + " (expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(actual) + ")"),
          expected_(expected), actual_(actual) {}
    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

class MagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionError : public FormatError {
public:
    VersionError(unsigned found, unsigned supported)
        : FormatError("unsupported checkpoint version " + std::to_string(found) +
                      " (this build reads version " + std::to_string(supported) + ")"),
          found_(found) {}
    unsigned found() const noexcept { return found_; }

private:
    unsigned found_;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public NumericError {
public:
    DivergenceError(long iteration, double loss)
        : NumericError("training diverged at iteration " + std::to_string(iteration) +
                       " (loss " + std::to_string(loss) + ")"),
          iteration_(iteration) {}
    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

}  // namespace implisat
