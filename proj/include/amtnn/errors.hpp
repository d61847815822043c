#ifndef AMTNN_ERRORS_HPP
#define AMTNN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace amtnn {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Operand shapes are not conformable for the requested operation.
struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(what) {}
};

/// A computation produced NaN/Inf or was evaluated outside its domain.
struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(what) {}
};

/// Training produced a non-finite loss; carries epoch/step context.
struct DivergenceError : NumericError {
    explicit DivergenceError(const std::string& what) : NumericError(what) {}
};

/// Bad or inconsistent configuration; the message names the field.
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(what) {}
};

/// File system or file format problem.
struct IoError : Error {
    explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace amtnn

#endif  // AMTNN_ERRORS_HPP
