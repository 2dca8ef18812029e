#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dw {

/// Machine-readable failure categories. The string form (see `to_string`) is what the
/// CLI and HTTP service put in the `kind` field of a diagnostic.
enum class ErrorKind {
    ParseError,
    DanglingEndpoint,
    InheritanceCycle,
    DuplicateName,
    InvalidType,
    TypeMismatch,
    CardinalityViolation,
    UnresolvedReference,
    UnknownClass,
    UnknownAttribute,
    UnknownLink,
    UnknownElement,
    UnknownObject,
    InvalidArgument,
    NameCollision,
    ClosureViolation,
    SpecificAttribute,
    NotHistorized,
    EndpointOutsideEnvironment,
    DisjointnessViolation,
    OutOfOrderRun,
    SyntaxError,
    UnknownOperator,
    ArityViolation,
    ValidationFailed,
    DivisionByZero,
    NullOperand,
    EmptyAggregate,
    Overflow,
    NotRepresentative,
    FactExists,
    NoFactClass,
    NotDependent,
    NotDateOrAddress,
    ComplexMeasure,
    AnchorMismatch,
    EmptySample,
    HierarchyCycle,
    AmbiguousPath,
    UnvalidatedDefinition,
    ExecutionFailed,
    StaleVersion,
    Conflict,
    HashMismatch,
    ReplayMismatch,
    IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every kind, in declaration order. The admin studio maps each one to a rendering.
std::span<const ErrorKind> all_error_kinds();

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace dw
