#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace privstream {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Specification parsing and evaluation.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class MissingAlways : public Error {
 public:
  using Error::Error;
};

class NestedTemporal : public Error {
 public:
  using Error::Error;
};

class UnknownProposition : public Error {
 public:
  using Error::Error;
};

class TooManyPropositions : public Error {
 public:
  using Error::Error;
};

// Calibration.
class EmptyCalibrationSet : public Error {
 public:
  using Error::Error;
};

// Detection backends and file formats.
class DetectorUnavailable : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class MissingFrame : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line) : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

class CorruptHeader : public Error {
 public:
  using Error::Error;
};

// Verification.
class IncompleteDetections : public Error {
 public:
  using Error::Error;
};

class StateExplosion : public Error {
 public:
  using Error::Error;
};

class Unsatisfiable : public Error {
 public:
  using Error::Error;
};

class MisalignedGroundTruth : public Error {
 public:
  using Error::Error;
};

}  // namespace privstream
