#include "dw/error.hpp"

#include <array>

namespace dw {

namespace {

constexpr std::array kAllKinds{
    ErrorKind::ParseError,
    ErrorKind::DanglingEndpoint,
    ErrorKind::InheritanceCycle,
    ErrorKind::DuplicateName,
    ErrorKind::InvalidType,
    ErrorKind::TypeMismatch,
    ErrorKind::CardinalityViolation,
    ErrorKind::UnresolvedReference,
    ErrorKind::UnknownClass,
    ErrorKind::UnknownAttribute,
    ErrorKind::UnknownLink,
    ErrorKind::UnknownElement,
    ErrorKind::UnknownObject,
    ErrorKind::InvalidArgument,
    ErrorKind::NameCollision,
    ErrorKind::ClosureViolation,
    ErrorKind::SpecificAttribute,
    ErrorKind::NotHistorized,
    ErrorKind::EndpointOutsideEnvironment,
    ErrorKind::DisjointnessViolation,
    ErrorKind::OutOfOrderRun,
    ErrorKind::SyntaxError,
    ErrorKind::UnknownOperator,
    ErrorKind::ArityViolation,
    ErrorKind::ValidationFailed,
    ErrorKind::DivisionByZero,
    ErrorKind::NullOperand,
    ErrorKind::EmptyAggregate,
    ErrorKind::Overflow,
    ErrorKind::NotRepresentative,
    ErrorKind::FactExists,
    ErrorKind::NoFactClass,
    ErrorKind::NotDependent,
    ErrorKind::NotDateOrAddress,
    ErrorKind::ComplexMeasure,
    ErrorKind::AnchorMismatch,
    ErrorKind::EmptySample,
    ErrorKind::HierarchyCycle,
    ErrorKind::AmbiguousPath,
    ErrorKind::UnvalidatedDefinition,
    ErrorKind::ExecutionFailed,
    ErrorKind::StaleVersion,
    ErrorKind::Conflict,
    ErrorKind::HashMismatch,
    ErrorKind::ReplayMismatch,
    ErrorKind::IoError,
};

} // namespace

std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::ParseError: return "parse-error";
    case ErrorKind::DanglingEndpoint: return "dangling-endpoint";
    case ErrorKind::InheritanceCycle: return "inheritance-cycle";
    case ErrorKind::DuplicateName: return "duplicate-name";
    case ErrorKind::InvalidType: return "invalid-type";
    case ErrorKind::TypeMismatch: return "type-mismatch";
    case ErrorKind::CardinalityViolation: return "cardinality-violation";
    case ErrorKind::UnresolvedReference: return "unresolved-reference";
    case ErrorKind::UnknownClass: return "unknown-class";
    case ErrorKind::UnknownAttribute: return "unknown-attribute";
    case ErrorKind::UnknownLink: return "unknown-link";
    case ErrorKind::UnknownElement: return "unknown-element";
    case ErrorKind::UnknownObject: return "unknown-object";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::NameCollision: return "name-collision";
    case ErrorKind::ClosureViolation: return "closure-violation";
    case ErrorKind::SpecificAttribute: return "specific-attribute";
    case ErrorKind::NotHistorized: return "not-historized";
    case ErrorKind::EndpointOutsideEnvironment: return "endpoint-outside-environment";
    case ErrorKind::DisjointnessViolation: return "disjointness-violation";
    case ErrorKind::OutOfOrderRun: return "out-of-order-run";
    case ErrorKind::SyntaxError: return "syntax-error";
    case ErrorKind::UnknownOperator: return "unknown-operator";
    case ErrorKind::ArityViolation: return "arity-violation";
    case ErrorKind::ValidationFailed: return "validation-failed";
    case ErrorKind::DivisionByZero: return "division-by-zero";
    case ErrorKind::NullOperand: return "null-operand";
    case ErrorKind::EmptyAggregate: return "empty-aggregate";
    case ErrorKind::Overflow: return "overflow";
    case ErrorKind::NotRepresentative: return "not-representative";
    case ErrorKind::FactExists: return "fact-exists";
    case ErrorKind::NoFactClass: return "no-fact-class";
    case ErrorKind::NotDependent: return "not-dependent";
    case ErrorKind::NotDateOrAddress: return "not-date-or-address";
    case ErrorKind::ComplexMeasure: return "complex-measure";
    case ErrorKind::AnchorMismatch: return "anchor-mismatch";
    case ErrorKind::EmptySample: return "empty-sample";
    case ErrorKind::HierarchyCycle: return "hierarchy-cycle";
    case ErrorKind::AmbiguousPath: return "ambiguous-path";
    case ErrorKind::UnvalidatedDefinition: return "unvalidated-definition";
    case ErrorKind::ExecutionFailed: return "execution-failed";
    case ErrorKind::StaleVersion: return "stale-version";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::HashMismatch: return "hash-mismatch";
    case ErrorKind::ReplayMismatch: return "replay-mismatch";
    case ErrorKind::IoError: return "io-error";
    }
    return "unknown";
}

std::span<const ErrorKind> all_error_kinds()
{
    return kAllKinds;
}

} // namespace dw
