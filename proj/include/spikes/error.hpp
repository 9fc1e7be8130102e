#pragma once

#include <stdexcept>
#include <string>

namespace spikes {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A constructor or operation received parameters outside its valid range.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// ψ or ψ' evaluated at α = 0 or inside the support of the PSD.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Second moment does not exceed the squared first moment.
class NoVarianceError : public Error {
public:
  using Error::Error;
};

class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

class CapExceeded : public Error {
public:
  using Error::Error;
};

/// Companion Stieltjes transform evaluated at a pole.
class PoleError : public Error {
public:
  using Error::Error;
};

class NoRootError : public Error {
public:
  using Error::Error;
};

/// No eigenvalues left after dropping or indexing into the spectrum.
class EmptyTail : public Error {
public:
  using Error::Error;
};

class DegenerateInput : public Error {
public:
  using Error::Error;
};

/// Malformed cell in an input matrix. Carries 1-based line and column.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line), column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

/// Ragged input rows.
class ShapeError : public Error {
public:
  ShapeError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

} // namespace spikes
