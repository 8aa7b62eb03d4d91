#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dynmatch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class EmptyGraph : public Error {
 public:
  EmptyGraph() : Error("graph has no vertices") {}
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

class NoSamples : public Error {
 public:
  using Error::Error;
};

class TruncationTooTight : public Error {
 public:
  TruncationTooTight(const std::string& what, double boundary_mass)
      : Error(what), boundary_mass_(boundary_mass) {}
  double boundary_mass() const noexcept { return boundary_mass_; }

 private:
  double boundary_mass_;
};

class SolveFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line()` is 1-based; 0 means "not tied to a line".
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(line == 0 ? message : "line " + std::to_string(line) + ": " + message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class AsymmetricMatrix : public ParseError {
 public:
  using ParseError::ParseError;
};

// A true diagonal entry is reported as a flavour of asymmetry so callers can
// catch either.
class InvalidDiagonal : public AsymmetricMatrix {
 public:
  using AsymmetricMatrix::AsymmetricMatrix;
};

}  // namespace dynmatch
