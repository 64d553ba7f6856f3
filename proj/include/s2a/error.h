#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace s2a {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed Standard MIDI File. Carries the byte offset where parsing failed.
class MidiParseError : public Error {
 public:
  MidiParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Input data violates a contract (range, vocabulary, shape).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during training (non-finite loss).
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace s2a
