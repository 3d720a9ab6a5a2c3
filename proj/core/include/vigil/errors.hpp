#pragma once

#include <stdexcept>
#include <string>

namespace vigil {

// Every failure mode the library reports gets its own type so callers can
// map them onto exit codes without string matching.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidModel : Error {
    using Error::Error;
};
struct UndefinedDfaTransition : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct ZeroLikelihood : Error {
    using Error::Error;
};
struct ModelMismatch : Error {
    using Error::Error;
};
struct VariantMismatch : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct EmptySample : Error {
    using Error::Error;
};
struct LengthMismatch : Error {
    using Error::Error;
};
struct DegenerateGap : Error {
    using Error::Error;
};
struct EmptyEvaluation : Error {
    using Error::Error;
};
struct TooLarge : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct NonFiniteGradient : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};

}  // namespace vigil
