#pragma once

#include <stdexcept>
#include <string>

namespace delayco {

// Bad user input: malformed partitions, dimension mismatches, violated
// plant assumptions. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (e.g. c > 1).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Caller broke a documented precondition (e.g. Lyapunov solve on a
// non-Hurwitz matrix).
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Iterative kernel did not converge. The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, int iterations = -1)
        : std::runtime_error(what), iterations_(iterations) {}

    int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

}  // namespace delayco
