#pragma once

#include <stdexcept>
#include <string>

namespace vabc {

// Structural problems: mismatched shapes, bad graph wiring.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf encountered where a finite value is required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: violated precondition that is not a shape issue.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Argument outside the mathematical domain of an operation.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed external file (IDX, checkpoint, config).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Batch sampler cannot satisfy its balancing contract.
struct SamplerError : std::runtime_error {
    explicit SamplerError(const std::string& msg) : std::runtime_error(msg) {}
};

// Evaluation classifier failed its accuracy gate.
struct EvalGateError : std::runtime_error {
    explicit EvalGateError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vabc
