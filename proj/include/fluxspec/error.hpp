#pragma once

#include <stdexcept>
#include <string>

namespace fluxspec {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

// Query outside a tabulated range.
class ExtrapolationError : public DomainError {
public:
  using DomainError::DomainError;
};

// Quadrature, root finding or another numerical procedure failed.
class NumericalError : public Error {
public:
  using Error::Error;
};

class FitError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// The data carry no information about a fitted parameter (e.g. flat trace).
class UnidentifiableError : public FitError {
public:
  using FitError::FitError;
};

// Design matrix of a linear fit is rank deficient.
class DegeneracyError : public FitError {
public:
  using FitError::FitError;
};

class EmptyEstimateError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

// Requested sampling exceeds the configured memory budget.
class ResourceError : public Error {
public:
  using Error::Error;
};

// Malformed input file or configuration.
class SchemaError : public Error {
public:
  SchemaError(const std::string& file, std::size_t line, const std::string& what)
      : Error(format(file, line, what)), file_(file), line_(line) {}
  explicit SchemaError(const std::string& what) : Error(what) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

private:
  static std::string format(const std::string& file, std::size_t line,
                            const std::string& what) {
    std::string out = file;
    if (line > 0) out += ":" + std::to_string(line);
    return out + ": " + what;
  }

  std::string file_;
  std::size_t line_ = 0;
};

class IoError : public Error {
public:
  using Error::Error;
};

namespace detail {

template <class E = DomainError>
inline void require(bool condition, const std::string& message) {
  if (!condition) throw E(message);
}

}  // namespace detail
}  // namespace fluxspec
