#pragma once

#include <stdexcept>
#include <string>

namespace ptd {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failures that a bootstrap replicate is allowed to retry
// (degenerate resample, singular design, solver stall).
class FitError : public Error {
 public:
  using Error::Error;
};

class NotSpdError : public FitError {
 public:
  using FitError::FitError;
};

class RankDeficientError : public FitError {
 public:
  using FitError::FitError;
};

class NoConvergenceError : public FitError {
 public:
  using FitError::FitError;
};

class InsufficientDataError : public FitError {
 public:
  using FitError::FitError;
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class TooFewDrawsError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class UnsupportedKindError : public Error {
 public:
  using Error::Error;
};

class InvalidDesignError : public Error {
 public:
  using Error::Error;
};

class DegenerateDenominatorError : public Error {
 public:
  using Error::Error;
};

class TooManyRedrawsError : public Error {
 public:
  using Error::Error;
};

class InvalidConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class MissingOnLabeledError : public Error {
 public:
  using Error::Error;
};

class InvalidLabelError : public Error {
 public:
  using Error::Error;
};

class IncompatibleMethodDesignError : public Error {
 public:
  using Error::Error;
};

}  // namespace ptd
