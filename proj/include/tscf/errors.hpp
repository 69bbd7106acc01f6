#pragma once

#include <stdexcept>
#include <string>

namespace tscf {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (ragged rows, wrong shapes, bad manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input carrying unusable data (non-finite values, empty files).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a precondition (shape mismatch, bad index).
class ContractError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// The requested operation is not defined for this input or model.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CorruptFileError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace tscf
