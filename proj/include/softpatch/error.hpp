#ifndef SOFTPATCH_ERROR_HPP
#define SOFTPATCH_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace softpatch {

enum class ErrorKind {
    Io,
    MalformedHeader,
    TruncatedPayload,
    NonFiniteValue,
    UnsupportedVersion,
    SchemaViolation,
    DuplicateId,
    InvalidArgument,
    InsufficientSamples,
    DimensionMismatch,
    EmptyInput,
    InfeasibleRatio,
    UndefinedMetric,
    SolverFailure,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Io: return "Io";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InfeasibleRatio: return "InfeasibleRatio";
    case ErrorKind::UndefinedMetric: return "UndefinedMetric";
    case ErrorKind::SolverFailure: return "SolverFailure";
    }
    return "Unknown";
}

/**
 * Single exception type for the library. The kind drives CLI exit codes and
 * lets tests assert on the failure class without parsing messages.
 */
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised by the feature loader; carries the flat index of the first bad value.
class NonFiniteError : public Error {
public:
    NonFiniteError(std::size_t index, const std::string& where)
        : Error(ErrorKind::NonFiniteValue, where + ": non-finite value at flat index " + std::to_string(index)),
          index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Schema violation with a JSON pointer to the offending field.
class SchemaError : public Error {
public:
    SchemaError(std::string pointer, const std::string& message)
        : Error(ErrorKind::SchemaViolation, (pointer.empty() ? std::string("/") : pointer) + ": " + message),
          pointer_(std::move(pointer)) {}

    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

}

#endif
