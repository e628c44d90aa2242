#pragma once

#include <stdexcept>
#include <string>

namespace sws {

// Failure classes. The CLI maps each one to a distinct process exit code.
enum class ErrorCode {
    kInternal = 1,
    kValidation = 2,
    kIo = 3,
    kFormat = 4,
    kStaleCache = 5,
    kNumeric = 6,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorCode::kValidation, what) {}
};

class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorCode::kNumeric, what) {}
};

class StaleCacheError : public Error {
public:
    explicit StaleCacheError(const std::string& what) : Error(ErrorCode::kStaleCache, what) {}
};

// TensorFile decoding failures; each subclass is a separate condition.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(ErrorCode::kFormat, what) {}
};

class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};
class KindError : public FormatError {
public:
    using FormatError::FormatError;
};
class OverlapError : public FormatError {
public:
    using FormatError::FormatError;
};
class TruncationError : public FormatError {
public:
    using FormatError::FormatError;
};
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace sws
