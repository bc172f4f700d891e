#pragma once

#include <stdexcept>
#include <string>

namespace smw {

/// Bad input or configuration (maps to CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical invariant was violated during a computation (CLI exit code 3).
/// `invariant()` names the violated property, e.g. "norm_conservation".
class NumericalError : public std::runtime_error {
public:
    NumericalError(std::string invariant, const std::string& what)
        : std::runtime_error(invariant + ": " + what), invariant_(std::move(invariant)) {}

    const std::string& invariant() const noexcept { return invariant_; }

private:
    std::string invariant_;
};

} // namespace smw
