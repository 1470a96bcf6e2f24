#pragma once
#include <stdexcept>
#include <string>

namespace dipanet {

// Violated caller contract (empty inputs, bad sizes, missing metadata).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Incompatible shapes between objects that should match.
class StructuralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite state produced during an evaluation.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long step) : std::runtime_error(what), step_index(step) {}
    long step_index;
};

// Point outside a function's declared domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Requested evaluation exceeds the configured work budget.
class ResourceBudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dipanet
